#!/usr/bin/env python
"""Utilidad de línea de comandos del motor GoldNeck."""
import sys


def main():
    """Ejecuta un comando de GoldNeck."""
    try:
        from GoldNeck.cli.main import run
    except ImportError as exc:
        raise ImportError(
            "No se pudo importar GoldNeck. ¿Están instaladas las dependencias de "
            "requirements.txt y se ejecuta desde la raíz del repositorio?"
        ) from exc
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
