"""
Excepciones personalizadas del motor GoldNeck.
"""


class GoldNeckException(Exception):
    """Excepción base para todos los errores del motor."""
    pass


class ConfigurationError(GoldNeckException):
    """Configuración o formas inválidas (dims incompatibles, claves desconocidas, parámetros faltantes)."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class NumericalError(GoldNeckException):
    """Aparecieron valores no finitos (NaN/Inf) durante un cálculo."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StateError(GoldNeckException):
    """Operación pedida en un estado que no la admite (p.ej. deploy_form sin fusionar)."""
    pass


class WeightFormatError(GoldNeckException):
    """Error genérico al leer un archivo de pesos GDW1."""
    pass


class BadMagicError(WeightFormatError):
    """Los primeros 4 bytes no son 'GDW1'."""
    pass


class TruncatedPayloadError(WeightFormatError):
    """El archivo termina antes de lo que declara su cabecera."""
    pass


class DuplicateNameError(WeightFormatError):
    """Dos entradas del archivo comparten el mismo nombre."""
    pass


class UnknownDtypeError(WeightFormatError):
    """La etiqueta de dtype no es conocida (solo 0 = f32)."""

    def __init__(self, message, dtype_tag=None):
        super().__init__(message)
        self.dtype_tag = dtype_tag


class TrailingBytesError(WeightFormatError):
    """Quedan bytes después de la última entrada declarada."""

    def __init__(self, message, extra=None):
        super().__init__(message)
        self.extra = extra
