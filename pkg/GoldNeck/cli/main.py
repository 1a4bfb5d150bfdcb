"""
Entrada de línea de comandos: `python manage.py <comando> [flags]`.

Códigos de salida: 0 éxito, 2 error de configuración/formato, 3 error numérico,
1 cualquier otro error. El diagnóstico va a stderr; los reportes a stdout.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from GoldNeck.cli.commands import COMMANDS
from GoldNeck.cli.config_document import ConfigDocument
from GoldNeck.exceptions import GoldNeckException, NumericalError
from GoldNeck.settings import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manage.py", description="Motor del neck Gather-and-Distribute")
    parser.add_argument("command", choices=sorted(COMMANDS), help="Comando a ejecutar")
    parser.add_argument("--config", help="Documento de configuración JSON (por defecto todos los valores por defecto)")
    parser.add_argument("--weights", help="Archivo de pesos GDW1; sin él se inicializa al azar con --seed")
    parser.add_argument("--seed", type=int, default=None, help="Semilla (default: GOLDNECK_DEFAULT_SEED)")
    parser.add_argument("--threads", type=int, default=None, help="Hilos de cómputo interno de conv2d")
    parser.add_argument("--out", help="Ruta de salida (pesos o tensores, según el comando)")
    parser.add_argument("--input", help="forward: archivo GDW1 con B2..B5 (o 'image' con backbone)")
    parser.add_argument("--toggles", help="ablate: lista separada por comas (default: las 5 filas de estructura)")
    parser.add_argument("--merge-ablation", action="store_true", help="ablate: comparar LAF concat vs add")
    parser.add_argument("--no-latency", action="store_true", help="ablate: omitir la medición de latencia")
    parser.add_argument("--jsonl", help="flops/ablate/bench: escribir también las filas JSONL")
    parser.add_argument("--plot", help="train-toy: guardar el gráfico de la curva de pérdida (PNG)")
    parser.add_argument("--deploy", action="store_true", help="Usar la forma fusionada (deploy_form)")
    parser.add_argument("--log-level", default=None, help="Nivel de logging (default: GOLDNECK_LOG_LEVEL)")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Ejecuta un comando y devuelve su código de salida (no llama a sys.exit)."""
    args = build_arg_parser().parse_args(argv)
    try:
        configure_logging(level=args.log_level)
    except (EnvironmentError, ValueError) as exc:
        sys.stderr.write(f"error: configuración de logging inválida: {exc}\n")
        return EXIT_CONFIG

    try:
        doc = ConfigDocument.load(args.config) if args.config else ConfigDocument()
        logger.debug(f"🚀 Comando {args.command}")
        return COMMANDS[args.command](args, doc)
    except NumericalError as exc:
        step = f" (paso {exc.step})" if exc.step is not None else ""
        sys.stderr.write(f"error numérico{step}: {exc}\n")
        return EXIT_NUMERICAL
    except GoldNeckException as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except Exception as exc:
        logger.exception(f"❌ Error inesperado en '{args.command}'")
        sys.stderr.write(f"error inesperado: {exc}\n")
        return EXIT_ERROR


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run(argv))
