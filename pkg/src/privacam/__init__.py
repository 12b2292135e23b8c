"""Privacy-aware camera simulation: thin-lens defocus and monochrome conversion."""

from privacam.errors import DataError, DomainError, PrivacamError, UsageError
from privacam.optics import (
    CameraConfig,
    BlurField,
    CurveTable,
    PAPER_CAMERA_80MM,
    PAPER_CAMERA_60MM,
    coc_diameter_px,
    blur_field,
    blur_depth_curve,
)
from privacam.depth import (
    DisparityMap,
    DepthMap,
    StereoRig,
    decode_disparity,
    encode_disparity,
    triangulate,
    fill_invalid,
)
from privacam.transform import (
    GrayscaleWeights,
    REC601,
    to_grayscale,
    quantize_8bit,
    dequantize_8bit,
)
from privacam.render import (
    DiskKernel,
    Layer,
    LayerStack,
    disk_kernel,
    quantize_layers,
    render_defocus,
    apply_variant,
)

__version__ = "0.1.0"
