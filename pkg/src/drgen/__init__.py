"""drgen: domain-randomized synthetic image generation with automatic
object-detection labels, plus the matching evaluation harness."""

__version__ = "0.1.0"

from .camera import PinholeCamera
from .errors import (ConfigError, DrgenError, FormatError, MeshError,
                     SceneError, ScenarioError)
from .geometry import Aabb, Transform
from .materials import (MaterialLibrary, MaterialSpec, MaterialStrategy,
                        TextureSpec, generate_default_library)
from .meshio import Mesh, load_mesh, save_mesh
from .scene import (Backplate, PartInstance, RegionOfInterest, SceneGraph,
                    load_scene, save_scene)
from .labeler import (InstanceAnnotation, LabelPolicy, export_coco,
                      extract_annotations, write_coco)
from .randomizer import (BackgroundConfig, BackgroundMode, DistractorConfig,
                         DistractorMode, DistractorPlacement,
                         RandomizationConfig, ScenarioSample, apply_scenario,
                         sample_scenario)
from .campaign import (CampaignConfig, frame_seed, frame_split,
                       load_campaign_config, relabel_campaign,
                       resume_campaign, run_campaign)
from .evalharness import (Detection, EvalReport, UseCaseRule,
                          average_precision, evaluate, iou, match_detections,
                          usecase_verdicts)

__all__ = [
    "__version__",
    "PinholeCamera",
    "ConfigError", "DrgenError", "FormatError", "MeshError",
    "SceneError", "ScenarioError",
    "Aabb", "Transform",
    "MaterialLibrary", "MaterialSpec", "MaterialStrategy",
    "TextureSpec", "generate_default_library",
    "Mesh", "load_mesh", "save_mesh",
    "Backplate", "PartInstance", "RegionOfInterest", "SceneGraph",
    "load_scene", "save_scene",
    "InstanceAnnotation", "LabelPolicy", "export_coco",
    "extract_annotations", "write_coco",
    "BackgroundConfig", "BackgroundMode", "DistractorConfig",
    "DistractorMode", "DistractorPlacement", "RandomizationConfig",
    "ScenarioSample", "apply_scenario", "sample_scenario",
    "CampaignConfig", "frame_seed", "frame_split", "load_campaign_config",
    "relabel_campaign", "resume_campaign", "run_campaign",
    "Detection", "EvalReport", "UseCaseRule", "average_precision",
    "evaluate", "iou", "match_detections", "usecase_verdicts",
]
