"""orbitpool: descriptors that pool over domain sizes and sampled orbits.

The package builds contrast-invariant orientation statistics, SIFT-like
grid descriptors with domain-size pooling, a Gabor scattering transform
(plain and size-pooled), and templates scored by the max over a sampled
set of planar-similarity warps. A synthetic benchmark harness and a small
CLI tie the pieces together.
"""

from .image import (
    AffineContrast,
    ContrastMap,
    GammaContrast,
    GradientField,
    ImageBuffer,
    ImageDataError,
    ImageFormatError,
    SimilarityTransform,
    SupportError,
    TableContrast,
    apply_contrast,
    apply_contrast_raw,
    compute_gradients,
    extract_patch,
    gaussian_blur,
    load_image,
    save_pgm,
    warp,
)
from .orientation import (
    CircularKernel,
    OrientationHistogram,
    SpatialKernel,
    bin_centers,
    kernel_eval,
    normalize,
    pixel_likelihood,
    pooled_histogram,
    soft_vote,
)
from .descriptor import (
    Descriptor,
    DescriptorConfig,
    Keypoint,
    SizePrior,
    descriptor_distance,
    detect_keypoints,
    dog_keypoints,
    dsp_descriptor,
    dump_descriptors,
    grid_keypoints,
    principal_orientations,
    read_descriptors,
    single_size_descriptor,
)
from .scattering import (
    FilterBank,
    ScatteringVector,
    build_filter_bank,
    dsp_scatter,
    dump_scattering,
    scatter,
)
from .soa import (
    GroupSampleSet,
    SOAResult,
    TemplateModel,
    anti_aliased_score,
    build_template,
    delta_perturbation,
    load_template,
    perturbation_grid,
    save_template,
    soa_likelihood,
)
from .bench import (
    KINDS,
    THRESHOLDS,
    EvalRecord,
    EvalReport,
    MatchConfig,
    MatchRecord,
    PairMatches,
    SynthSpec,
    SyntheticPair,
    directional_benchmark,
    evaluate,
    load_pair,
    make_pair,
    match_pair,
    save_pair,
    synth_pairs,
)

__all__ = [
    "AffineContrast",
    "CircularKernel",
    "ContrastMap",
    "Descriptor",
    "DescriptorConfig",
    "EvalRecord",
    "EvalReport",
    "FilterBank",
    "GammaContrast",
    "GradientField",
    "GroupSampleSet",
    "ImageBuffer",
    "ImageDataError",
    "ImageFormatError",
    "KINDS",
    "Keypoint",
    "MatchConfig",
    "MatchRecord",
    "OrientationHistogram",
    "PairMatches",
    "SOAResult",
    "ScatteringVector",
    "SimilarityTransform",
    "SizePrior",
    "SpatialKernel",
    "SupportError",
    "SynthSpec",
    "SyntheticPair",
    "THRESHOLDS",
    "TableContrast",
    "TemplateModel",
    "anti_aliased_score",
    "apply_contrast",
    "apply_contrast_raw",
    "bin_centers",
    "build_filter_bank",
    "build_template",
    "compute_gradients",
    "delta_perturbation",
    "descriptor_distance",
    "detect_keypoints",
    "directional_benchmark",
    "dog_keypoints",
    "dsp_descriptor",
    "dsp_scatter",
    "dump_descriptors",
    "dump_scattering",
    "evaluate",
    "extract_patch",
    "gaussian_blur",
    "grid_keypoints",
    "kernel_eval",
    "load_image",
    "load_pair",
    "load_template",
    "make_pair",
    "match_pair",
    "normalize",
    "perturbation_grid",
    "pixel_likelihood",
    "pooled_histogram",
    "principal_orientations",
    "read_descriptors",
    "save_pair",
    "save_pgm",
    "save_template",
    "scatter",
    "single_size_descriptor",
    "soa_likelihood",
    "soft_vote",
    "synth_pairs",
    "warp",
]

__version__ = "0.1.0"
