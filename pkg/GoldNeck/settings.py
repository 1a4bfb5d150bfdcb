"""
Ajustes globales del motor GoldNeck.

Constantes numéricas compartidas y la configuración de logging (dictConfig).
"""
import logging.config

from config import EngineConfig

# ============================================================================
# CONSTANTES NUMÉRICAS
# ============================================================================

# eps de batchnorm, fijo para todo el motor (fusión incluida)
BN_EPS = 1e-5

# Tolerancias de aceptación
FUSION_TOLERANCE = 1e-4
GRADCHECK_TOLERANCE = 1e-3

# Mínimos del harness de latencia
MIN_BENCH_ITERATIONS = 30
MIN_BENCH_WARMUP = 5

# ============================================================================
# CONFIGURACIÓN DE LOGGING
# ============================================================================

LOGS_DIR = EngineConfig.LOGS_DIR


def build_logging_config(level=None, log_to_file=None):
    """
    Construye el diccionario de logging.

    Args:
        level: Nivel para los loggers de GoldNeck (None = GOLDNECK_LOG_LEVEL)
        log_to_file: Agregar el handler rotativo (None = GOLDNECK_LOG_TO_FILE)
    """
    level = (level or EngineConfig.LOG_LEVEL).upper()
    log_to_file = EngineConfig.LOG_TO_FILE if log_to_file is None else log_to_file

    handlers = {
        'console': {
            'level': level,
            '()': 'GoldNeck.utils.logging_handlers.SafeConsoleHandler',
            'formatter': 'detailed',
        },
    }
    engine_handlers = ['console']

    if log_to_file:
        LOGS_DIR.mkdir(parents=True, exist_ok=True)
        handlers['file'] = {
            'level': 'INFO',
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': LOGS_DIR / 'goldneck.log',
            'maxBytes': 1024 * 1024 * 10,  # 10 MB
            'backupCount': 5,
            'formatter': 'detailed',
            'filters': ['unicode_safe'],
        }
        engine_handlers.append('file')

    return {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'simple': {
                'format': '{levelname} {message}',
                'style': '{',
            },
            'detailed': {
                'format': '[{asctime}] {levelname} [{name}] {message}',
                'style': '{',
                'datefmt': '%Y-%m-%d %H:%M:%S',
            },
        },
        'filters': {
            'unicode_safe': {
                '()': 'GoldNeck.utils.logging_handlers.UnicodeSafeFilter',
            },
        },
        'handlers': handlers,
        'root': {
            'handlers': ['console'],
            'level': 'WARNING',
        },
        'loggers': {
            'GoldNeck': {
                'handlers': engine_handlers,
                'level': level,
                'propagate': False,
                'filters': ['unicode_safe'],
            },
        },
    }


def configure_logging(level=None, log_to_file=None):
    """Aplica la configuración de logging. Lo llama la CLI al arrancar."""
    EngineConfig.validate()
    logging.config.dictConfig(build_logging_config(level=level, log_to_file=log_to_file))
