"""Figure regeneration from ems-forge CSV/JSON artifacts."""

from .jobs import (CUT, PHASE_MAPS, SWEEP_OVERLAY, UV_MAP, FigureJob,
                   ManifestError, load_manifest)
from .render import ColumnError, EmptyInputError, render

__version__ = "0.1.0"
