import os
import sys

# the packages live at the repository root, as with env.sh
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
