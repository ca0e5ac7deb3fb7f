from .models import parse_args, main
