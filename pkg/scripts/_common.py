"""Shared helpers for the experiment scripts."""
import argparse
import os

from dumbbellflow.cli import write_json, write_table


def parser(description):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--quick", action="store_true", help="reduced sizes")
    ap.add_argument("--out", default="results", help="output directory")
    return ap


def save(out_dir, name, payload):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    write_json(path, payload)
    print(f"wrote {path}")


def save_table(out_dir, name, columns, units, data):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    write_table(path, columns, units, data)
    print(f"wrote {path}")
