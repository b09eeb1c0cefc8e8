import sys
from pathlib import Path

# make the shared helpers importable regardless of invocation directory
sys.path.insert(0, str(Path(__file__).parent))
