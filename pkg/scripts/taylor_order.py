"""Truncation error of the local stress expansions against the exact s-integral."""
from _common import parser, save

from dumbbellflow.acceptance import taylor_order

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--lengths", type=float, nargs="+", default=[8.0, 16.0, 32.0, 64.0])
    a = ap.parse_args()
    v = taylor_order(a.quick, tuple(a.lengths))
    for r, e0, e2 in zip(v["ell_over_L"], v["error_order0"], v["error_order2"]):
        print(f"l0/L={r:.4f}  order-0 {e0:.3e}  order-2 {e2:.3e}")
    print(f"fitted orders {v['order0']:.2f}, {v['order2']:.2f}")
    save(a.out, "taylor_order.json", v)
