"""Run the acceptance battery and store suite.json."""
import sys

from _common import parser

from dumbbellflow.cli import cmd_suite

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--only", type=int, nargs="+", metavar="N")
    a = ap.parse_args()
    sys.exit(cmd_suite(a.quick, a.only, a.out))
