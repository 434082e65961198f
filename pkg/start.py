"""
Launcher de la aplicación joint-struct.
Este archivo permite ejecutar la CLI desde la raíz del proyecto.

Uso:
    python start.py oracle-check
    python start.py synth --out-dir data/synth
"""

import os
import sys

# Añadir el directorio src al path de Python
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from main import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
