"""Writes the tiny linear ONNX encoders used by crates/core/tests/onnx.rs.

The image encoder flattens a 1x3x4x4 input and multiplies by a 48x4
matrix. The text encoder casts 8 token ids to float and multiplies by an
8x4 matrix. Weights follow closed-form rules that the Rust test repeats.

    python3 python/make_onnx_fixtures.py crates/core/tests/fixtures/onnx
"""

import json
import os
import sys

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper
from tokenizers import Tokenizer, models, pre_tokenizers

RES = 4
CONTEXT = 8
DIM = 4
VOCAB = ["[UNK]", "red", "kite", "over", "a", "field"]


def image_weight(i, j):
    return ((i * 7 + j * 3) % 11 - 5) / 10


def text_weight(i, j):
    return ((i * 5 + j * 2) % 7 - 3) / 4


def save(graph, path):
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    onnx.checker.check_model(model)
    onnx.save(model, path)


def image_model(path):
    n = 3 * RES * RES
    w = np.array([[image_weight(i, j) for j in range(DIM)] for i in range(n)], dtype=np.float32)
    graph = helper.make_graph(
        [
            helper.make_node("Flatten", ["pixels"], ["flat"], axis=1),
            helper.make_node("MatMul", ["flat", "w"], ["embedding"]),
        ],
        "image_encoder",
        [helper.make_tensor_value_info("pixels", TensorProto.FLOAT, [1, 3, RES, RES])],
        [helper.make_tensor_value_info("embedding", TensorProto.FLOAT, [1, DIM])],
        [numpy_helper.from_array(w, "w")],
    )
    save(graph, path)


def text_model(path):
    w = np.array([[text_weight(i, j) for j in range(DIM)] for i in range(CONTEXT)], dtype=np.float32)
    graph = helper.make_graph(
        [
            helper.make_node("Cast", ["ids"], ["ids_f"], to=TensorProto.FLOAT),
            helper.make_node("MatMul", ["ids_f", "w"], ["embedding"]),
        ],
        "text_encoder",
        [helper.make_tensor_value_info("ids", TensorProto.INT64, [1, CONTEXT])],
        [helper.make_tensor_value_info("embedding", TensorProto.FLOAT, [1, DIM])],
        [numpy_helper.from_array(w, "w")],
    )
    save(graph, path)


def tokenizer(path):
    tok = Tokenizer(models.WordLevel({w: i for i, w in enumerate(VOCAB)}, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    tok.save(path)


def main(out):
    os.makedirs(out, exist_ok=True)
    image_model(os.path.join(out, "image.onnx"))
    text_model(os.path.join(out, "text.onnx"))
    tokenizer(os.path.join(out, "tokenizer.json"))
    manifest = {
        "name": "linear-fixture",
        "dimension": DIM,
        "input_resolution": RES,
        "image_model_path": "image.onnx",
        "text_model_path": "text.onnx",
        "tokenizer_path": "tokenizer.json",
        "context_length": CONTEXT,
        "image_mean": [0.0, 0.0, 0.0],
        "image_std": [1.0, 1.0, 1.0],
    }
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/onnx")
