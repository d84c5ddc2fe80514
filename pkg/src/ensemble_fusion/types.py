from typing import TYPE_CHECKING, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

if TYPE_CHECKING:
    from .model import Detection, FusedDetection

ImageId = int
CategoryId = int
ModelId = int
# Corner form: x1, y1, x2, y2
Coordinates = Tuple[float, float, float, float]
BoxArray = npt.NDArray[np.float64]
FusedOutputs = Dict[ImageId, List["FusedDetection"]]
ScoredOutputs = Mapping[ImageId, Sequence[Union["Detection", "FusedDetection"]]]
JSONRecord = Dict[str, object]
