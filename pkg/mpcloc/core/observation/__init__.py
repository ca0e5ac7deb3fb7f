from .models import Observation, SideMpc, SideSet, UnpairedObservation
