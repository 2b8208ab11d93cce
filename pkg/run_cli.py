#!/usr/bin/env python3
"""
Run the ``flexevent`` command line from a source checkout.

    python run_cli.py synth-gen --preset standard --seed 7 --out runs/scene
"""
import sys
from pathlib import Path

project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from src.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
