"""Solution-mode minus solvent-mode coupled profiles as the dumbbell volume fraction shrinks."""
from _common import parser, save

from dumbbellflow.acceptance import mode_continuity

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--phis", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    a = ap.parse_args()
    save(a.out, "mode_continuity.json", mode_continuity(a.quick, tuple(a.phis)))
