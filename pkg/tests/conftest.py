import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]

try:  # installed (possibly editable); otherwise run from the checkout
    import effwasm  # noqa: F401
except ImportError:  # pragma: no cover
    sys.path.insert(0, str(ROOT / "src"))
