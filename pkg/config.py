import os
from pathlib import Path

from dotenv import load_dotenv

# Cargar variables desde el archivo .env (si existe)
load_dotenv()

BASE_DIR = Path(__file__).resolve().parent


def _bool(name, default):
    return os.getenv(name, default).lower() in ("true", "1", "yes")


def _int(name, default):
    raw = os.getenv(name, "")
    if raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        return None


class EngineConfig:
    """
    Configuración del motor GoldNeck desde variables de entorno.

    Variables opcionales (tienen valores por defecto):
    - GOLDNECK_LOG_LEVEL: Nivel de logging (default: INFO)
    - GOLDNECK_LOGS_DIR: Carpeta de logs (default: <repo>/logs)
    - GOLDNECK_LOG_TO_FILE: Escribir también a archivo rotativo (default: False)
    - GOLDNECK_THREADS: Hilos para paralelismo interno de conv2d (default: 1)
    - GOLDNECK_DEFAULT_SEED: Semilla cuando la CLI no recibe --seed (default: 0)
    """
    LOG_LEVEL = os.getenv("GOLDNECK_LOG_LEVEL", "INFO").upper()
    LOGS_DIR = Path(os.getenv("GOLDNECK_LOGS_DIR", str(BASE_DIR / "logs")))
    LOG_TO_FILE = _bool("GOLDNECK_LOG_TO_FILE", "False")
    THREADS = _int("GOLDNECK_THREADS", 1)
    DEFAULT_SEED = _int("GOLDNECK_DEFAULT_SEED", 0)

    @classmethod
    def validate(cls):
        invalid = []
        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            invalid.append("GOLDNECK_LOG_LEVEL")
        if cls.THREADS is None or cls.THREADS < 1:
            invalid.append("GOLDNECK_THREADS")
        if cls.DEFAULT_SEED is None or cls.DEFAULT_SEED < 0:
            invalid.append("GOLDNECK_DEFAULT_SEED")

        if invalid:
            raise EnvironmentError(f"❌ Variables de entorno inválidas: {', '.join(invalid)}")
