"""LR-FHSS simulator package initializer to allow running modules via 'python -m scripts.<module>' from here."""
import sys, pathlib
ROOT=pathlib.Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))
