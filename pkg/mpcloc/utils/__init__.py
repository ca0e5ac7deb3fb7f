from .filesystem import ensure_parent_dir, is_yaml_path
from .random import as_generator, substream, PURPOSES
from .optimize import multistart_simplex, SimplexResult
