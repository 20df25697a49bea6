"""Extrapolated wall stress of coupled channel runs under y-refinement."""
from _common import parser, save

from dumbbellflow.acceptance import wall_stress_check

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--ny", type=int, nargs="+", default=[16, 32, 64])
    a = ap.parse_args()
    v = wall_stress_check(a.quick, tuple(a.ny))
    for ny, r, c in zip(v["ny"], v["ratio"], v["converged"]):
        print(f"ny={ny:4d}  |tau_wall + N kBT delta|/(N kBT) = {r:.4f}  converged={c}")
    save(a.out, "wall_stress.json", v)
