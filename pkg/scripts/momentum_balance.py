"""Polymer momentum residual of an inertial ensemble in Kolmogorov flow versus ensemble size."""
from _common import parser, save

from dumbbellflow.acceptance import momentum_balance

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    ap.add_argument("--seed", type=int, default=2)
    a = ap.parse_args()
    v = momentum_balance(a.quick, tuple(a.sizes), a.seed)
    save(a.out, "momentum_balance.json", v)
