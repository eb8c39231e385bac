from .bvh import Bvh, FlatScene, build_bvh, flatten_scene
from .envlight import (EnvironmentLight, EnvTables, build_alias_table,
                       build_env_tables)
from .hdr import read_hdr, write_hdr
from .tracer import (FrameBuffers, RenderSettings, add_sensor_noise,
                     render_instance_ids, tonemap_srgb, trace)

__all__ = [
    "Bvh",
    "FlatScene",
    "build_bvh",
    "flatten_scene",
    "EnvironmentLight",
    "EnvTables",
    "build_alias_table",
    "build_env_tables",
    "read_hdr",
    "write_hdr",
    "FrameBuffers",
    "RenderSettings",
    "add_sensor_noise",
    "render_instance_ids",
    "tonemap_srgb",
    "trace",
]
