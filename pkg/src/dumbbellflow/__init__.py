"""Two-fluid dumbbell models of dilute polymer solutions near walls."""
import os as _os

# the TBB layer shipped on many systems is too old for numba; workqueue is always available
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

__version__ = "0.1.0"
