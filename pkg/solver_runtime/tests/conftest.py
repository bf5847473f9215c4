"""Path setup so the tests run from a bare checkout.

When minilp (or the harness package used by the conformance test) is
not installed, fall back to the in-repo source trees.
"""

import sys
from pathlib import Path

PACKAGE_ROOT = Path(__file__).resolve().parent.parent
REPO_ROOT = PACKAGE_ROOT.parent

for candidate in (PACKAGE_ROOT / "src", REPO_ROOT / "src"):
    if candidate.is_dir() and str(candidate) not in sys.path:
        sys.path.insert(0, str(candidate))
