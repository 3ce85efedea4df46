#!/usr/bin/env python3
"""
Startup script that runs the command-line interface.
"""
import sys
from pathlib import Path

# Add the project root to sys.path for proper imports
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from app.main import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
