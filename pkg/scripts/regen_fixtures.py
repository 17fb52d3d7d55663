"""Regenerate the checked-in fixtures and their manifest.

Fixtures are never edited by hand; run this after changing a preset.

    python scripts/regen_fixtures.py [fixtures/]
"""

import sys

from latvar.synth import write_fixtures

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "fixtures"
    for path in write_fixtures(out):
        print(path)
