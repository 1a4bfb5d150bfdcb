"""
Handlers y filtros personalizados de logging para consolas sin UTF-8.
"""
import logging
import re
import sys


class UnicodeSafeFilter(logging.Filter):
    """
    Filtro que reemplaza los marcadores emoji de los mensajes por etiquetas ASCII.

    En Windows, además, cualquier otro emoji se reemplaza por [?].
    """

    EMOJI_REPLACEMENTS = {
        '🚀': '[INIT]',
        '✅': '[OK]',
        '❌': '[ERROR]',
        '🔄': '[STEP]',
        '🔍': '[CHECK]',
        '⚠️': '[WARN]',
        '⏱️': '[BENCH]',
        '📊': '[REPORT]',
        '💾': '[SAVE]',
    }

    def filter(self, record):
        if hasattr(record, 'msg') and isinstance(record.msg, str):
            for emoji, replacement in self.EMOJI_REPLACEMENTS.items():
                record.msg = record.msg.replace(emoji, replacement)

            if sys.platform == 'win32':
                record.msg = re.sub(
                    r'[\U0001F300-\U0001F9FF]|[☀-⟿]',
                    '[?]',
                    record.msg
                )

        return True


class SafeConsoleHandler(logging.StreamHandler):
    """
    Handler de consola que nunca falla por errores de encoding.

    Escribe en stderr por defecto: stdout queda reservado para los reportes de la CLI.
    """

    def __init__(self, stream=None):
        if stream is None:
            stream = sys.stderr
        super().__init__(stream)
        self.addFilter(UnicodeSafeFilter())

    def emit(self, record):
        try:
            msg = self.format(record)
            stream = self.stream
            try:
                stream.write(msg + self.terminator)
            except UnicodeEncodeError:
                safe_msg = msg.encode('ascii', errors='replace').decode('ascii')
                stream.write(safe_msg + self.terminator)
            self.flush()
        except Exception:
            self.handleError(record)
