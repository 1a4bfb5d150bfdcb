"""
Implementación de los comandos de la CLI.

Cada comando recibe los argumentos ya parseados y el ConfigDocument, escribe el
reporte en stdout y devuelve el código de salida. Los errores se propagan como
excepciones de GoldNeck; main.py los traduce a códigos de salida.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from config import EngineConfig
from GoldNeck.analysis.bench import random_inputs
from GoldNeck.analysis.report import analyze_neck, emit_ablation_table
from GoldNeck.autodiff import fd_gradcheck
from GoldNeck.cli.config_document import ConfigDocument
from GoldNeck.cli.weights import read_weights, write_weights
from GoldNeck.exceptions import ConfigurationError, NumericalError
from GoldNeck.graph import EAGER
from GoldNeck.neck.config import DEFAULT_ABLATION, MERGE_ABLATION, NeckConfig
from GoldNeck.neck.gd_neck import neck_graph, pyramid_dims
from GoldNeck.neck.pafpn import pafpn_graph
from GoldNeck.neck.toy import IMAGE_CHANNELS, make_square_dataset, toy_backbone
from GoldNeck.neck.trainer import toy_train
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.nn.repconv import fuse_store
from GoldNeck.params import ParamStore, init_params
from GoldNeck.settings import GRADCHECK_TOLERANCE
from GoldNeck.tensor.core import Tensor, as_compute, set_num_threads

logger = logging.getLogger(__name__)

NECK_GRAPHS = {"gd": neck_graph, "pafpn": pafpn_graph}


def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


# ============================================================================
# RESOLUCIÓN DE OPCIONES
# ============================================================================

def resolve_seed(args, default: Optional[int] = None) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    return EngineConfig.DEFAULT_SEED if default is None else int(default)


def apply_threads(args, doc: ConfigDocument) -> int:
    """--threads > bench.threads > GOLDNECK_THREADS: gana el primero definido (un 0 no cae al siguiente)."""
    threads = next(
        (v for v in (getattr(args, "threads", None), doc.bench["threads"], EngineConfig.THREADS) if v is not None),
        1,
    )
    set_num_threads(threads)
    return int(threads)


def model_graph(doc: ConfigDocument, cfg: NeckConfig, mode: str):
    """Grafo del modelo según el documento: neck solo, o backbone de juguete + neck."""
    neck = NECK_GRAPHS[doc.model["neck"]](cfg, mode)
    if not doc.model["backbone"]:
        return neck

    def graph(ops, inputs, params):
        return neck(ops, toy_backbone(inputs, params, cfg, ops=ops), params)

    return graph


def model_input_dims(doc: ConfigDocument, cfg: NeckConfig, input_size: int):
    if doc.model["backbone"]:
        return (1, IMAGE_CHANNELS, input_size, input_size)
    return pyramid_dims(cfg, input_size)


def resolve_params(args, doc: ConfigDocument, cfg: NeckConfig, input_size: int, seed: int,
                   deploy: bool = False) -> ParamStore:
    """--weights > io.weights > inicialización aleatoria con `seed`; --deploy fusiona."""
    path = getattr(args, "weights", None) or doc.io["weights"]
    if path:
        store = read_weights(path)
    else:
        store = init_params(model_graph(doc, cfg, "train_form"), model_input_dims(doc, cfg, input_size), seed)
        logger.info(f"🔄 Parámetros aleatorios con semilla {seed} ({store.numel():,} floats)")
    return fuse_store(store) if deploy else store


def _mode(args, doc: ConfigDocument) -> str:
    return "deploy_form" if getattr(args, "deploy", False) else doc.bench["mode"]


def _inputs_from_file(path, doc: ConfigDocument):
    store = read_weights(path)
    if doc.model["backbone"]:
        if "image" not in store:
            raise ConfigurationError(f"{path}: falta la entrada 'image'", key="--input")
        return Tensor(store["image"])
    missing = [n for n in ("B2", "B3", "B4", "B5") if n not in store]
    if missing:
        raise ConfigurationError(f"{path}: faltan los niveles {', '.join(missing)}", key="--input")
    return FeaturePyramid((n, Tensor(store[n])) for n in ("B2", "B3", "B4", "B5"))


def level_summary(name: str, value) -> str:
    arr = as_compute(value)
    dims = "x".join(str(d) for d in arr.shape)
    return (f"{name} {dims} mean={arr.mean():.6g} std={arr.std():.6g} "
            f"min={arr.min():.6g} max={arr.max():.6g}")


# ============================================================================
# COMANDOS
# ============================================================================

def cmd_forward(args, doc: ConfigDocument) -> int:
    cfg = doc.to_neck_config()
    apply_threads(args, doc)
    size = doc.bench["input_size"]
    seed = resolve_seed(args)
    mode = _mode(args, doc)
    params = resolve_params(args, doc, cfg, size, seed, deploy=mode == "deploy_form")

    input_path = getattr(args, "input", None) or doc.io["input"]
    if input_path:
        inputs = _inputs_from_file(input_path, doc)
    else:
        inputs = random_inputs(model_input_dims(doc, cfg, size), seed)

    outputs = model_graph(doc, cfg, mode)(EAGER, inputs, params)
    lines = [level_summary(name, value) for name, value in outputs]
    for name, value in outputs:
        if not np.all(np.isfinite(as_compute(value))):
            raise NumericalError(f"Salida no finita en {name}")
    _emit("\n".join(lines) + "\n")

    out_path = getattr(args, "out", None) or doc.io["output"]
    if out_path:
        write_weights(out_path, ParamStore({name: value.data for name, value in outputs}))
    return 0


def cmd_flops(args, doc: ConfigDocument) -> int:
    cfg = doc.to_neck_config()
    mode = _mode(args, doc)
    report = analyze_neck(cfg, doc.bench["input_size"], mode=mode, with_latency=False,
                          neck=doc.model["neck"])
    _emit(report.render())
    _write_jsonl(getattr(args, "jsonl", None), report.to_jsonl())
    return 0


def parse_toggles(raw: Optional[str], merge_ablation: bool = False) -> list[str]:
    if merge_ablation:
        return list(MERGE_ABLATION)
    if raw is None:
        return list(DEFAULT_ABLATION)
    return [t.strip() for t in raw.split(",") if t.strip()]


def cmd_ablate(args, doc: ConfigDocument) -> int:
    cfg = doc.to_neck_config()
    apply_threads(args, doc)
    toggles = parse_toggles(getattr(args, "toggles", None), getattr(args, "merge_ablation", False))
    table = emit_ablation_table(
        cfg, toggles, doc.bench["input_size"], with_latency=not getattr(args, "no_latency", False),
        iterations=doc.bench["iterations"], warmup=doc.bench["warmup"], seed=resolve_seed(args),
        mode=_mode(args, doc),
    )
    _emit(table.render())
    _write_jsonl(getattr(args, "jsonl", None), table.to_jsonl())
    return 0


def cmd_bench(args, doc: ConfigDocument) -> int:
    cfg = doc.to_neck_config()
    apply_threads(args, doc)
    size = doc.bench["input_size"]
    seed = resolve_seed(args)
    mode = _mode(args, doc)
    params = None
    if getattr(args, "weights", None) or doc.io["weights"] or mode == "deploy_form":
        params = resolve_params(args, doc, cfg, size, seed, deploy=mode == "deploy_form")
    report = analyze_neck(cfg, size, params, mode, with_latency=True, iterations=doc.bench["iterations"],
                          warmup=doc.bench["warmup"], seed=seed, neck=doc.model["neck"])
    _emit(report.render())
    _write_jsonl(getattr(args, "jsonl", None), report.to_jsonl())
    return 0


def cmd_train_toy(args, doc: ConfigDocument) -> int:
    cfg = doc.to_neck_config()
    train = doc.train
    seed = resolve_seed(args, default=train["seed"])
    dataset = make_square_dataset(train["dataset_size"], train["image_size"], cfg.num_classes, seed)
    result = toy_train(cfg, dataset, steps=train["steps"], lr=train["lr"], momentum=train["momentum"],
                       seed=seed, clip=train["clip"], batch_size=train["batch_size"])

    _emit(f"loss {result.initial_loss:.6f} -> {result.final_loss:.6f} en {len(result.losses)} pasos\n")
    out_path = getattr(args, "out", None) or doc.io["output"]
    if out_path:
        write_weights(out_path, result.store)
        curve = Path(f"{out_path}.losses.jsonl")
        curve.write_text("".join(json.dumps(r) + "\n" for r in result.records()), encoding="utf-8")
        logger.info(f"💾 Curva de pérdida en {curve}")
    plot_path = getattr(args, "plot", None)
    if plot_path:
        plot_losses(result.losses, plot_path)
    return 0


def plot_losses(losses, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(losses)), losses)
    ax.set_xlabel("paso")
    ax.set_ylabel("pérdida")
    ax.set_title("Entrenamiento de juguete")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"📊 Gráfico de pérdida en {path}")


def cmd_export_weights(args, doc: ConfigDocument) -> int:
    out_path = getattr(args, "out", None) or doc.io["output"]
    if not out_path:
        raise ConfigurationError("export-weights requiere --out o io.output", key="--out")
    cfg = doc.to_neck_config()
    store = resolve_params(args, doc, cfg, doc.bench["input_size"], resolve_seed(args),
                           deploy=getattr(args, "deploy", False))
    size = write_weights(out_path, store)
    _emit(f"{out_path}: {len(store)} tensores, {store.numel():,} floats, {size:,} bytes\n")
    return 0


def cmd_gradcheck(args, doc: ConfigDocument) -> int:
    cfg = doc.to_neck_config()
    size = doc.train["image_size"]
    seed = resolve_seed(args)
    graph = model_graph(doc, cfg, "train_form")
    dims = model_input_dims(doc, cfg, size)
    store = resolve_params(args, doc, cfg, size, seed)
    worst = fd_gradcheck(graph, random_inputs(dims, seed), store, seed=seed)
    status = "ok" if worst <= GRADCHECK_TOLERANCE else "FALLA"
    _emit(f"gradcheck {status}: error relativo máximo {worst:.3e} (tolerancia {GRADCHECK_TOLERANCE:g})\n")
    if worst > GRADCHECK_TOLERANCE:
        raise NumericalError(f"Gradcheck fuera de tolerancia: {worst:.3e} > {GRADCHECK_TOLERANCE:g}")
    return 0


def _write_jsonl(path, text: str) -> None:
    if not path:
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")
    logger.info(f"💾 Filas JSONL en {path}")


COMMANDS = {
    "forward": cmd_forward,
    "flops": cmd_flops,
    "ablate": cmd_ablate,
    "bench": cmd_bench,
    "train-toy": cmd_train_toy,
    "export-weights": cmd_export_weights,
    "gradcheck": cmd_gradcheck,
}
