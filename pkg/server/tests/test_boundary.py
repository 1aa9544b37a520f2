import re
from pathlib import Path

import coordseg_server

# the server is coupled to the wire protocol, never to the client package
FORBIDDEN = re.compile(r"^\s*(?:from|import)\s+coordseg(?!_server)\b", re.MULTILINE)


def test_source_never_imports_the_evaluation_package():
    root = Path(coordseg_server.__file__).parent
    offenders = [
        str(path)
        for path in sorted(root.rglob("*.py"))
        if FORBIDDEN.search(path.read_text())
    ]
    assert offenders == []
