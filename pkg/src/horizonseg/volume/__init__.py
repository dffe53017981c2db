from .cube import DEFAULT_SAMPLE_INTERVAL_MS, Cube, CubeGeometry, slice_section, value_stats
from .native import load_native, save_native
from .segy import ingest_segy, write_segy, write_segy_cube
from .synthetic import SyntheticSpec, ricker, synthesize_cube
