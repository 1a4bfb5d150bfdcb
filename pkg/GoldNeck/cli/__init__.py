from GoldNeck.cli.config_document import ConfigDocument
from GoldNeck.cli.weights import load_weights, read_weights, save_weights, write_weights
