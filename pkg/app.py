"""Entry point: ``python app.py <task> --config data/configs/two_level.yaml [--out DIR]``.

Tasks: validate, smatrix, sweep, degeneracies, loops, predict, compare,
superasym, symmetry.  Runtime knobs come from the environment (see config.py).
"""
import sys

from nlevel_core.cli import main

if __name__ == "__main__":
    sys.exit(main())
