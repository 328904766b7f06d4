"""Recurrent language models with parallel cells.

Each recurrent layer is split into ``wide`` small independent cells whose
outputs are concatenated, which cuts the recurrent parameter count to about
``1/wide`` of a single cell of the same total width.
"""
from .analysis import ensemble_eval, mask_sweep, param_report
from .cells import CellKind, CellParams, CellState, cell_backward, cell_forward
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Vocab, build_vocab, byte_vocab, decode, encode, make_batches
from .model import (LMModel, ModelConfig, ModelState, backward_sequence, evaluate,
                    forward_sequence, loss, perplexity)
from .pc_layer import (ParallelLayer, RoutingMode, build_layer, closed_form_lstm,
                       closed_form_rnn, count_params, pc_backward, pc_forward, zero_states)
from .prng import Rng
from .training import (DropoutPlan, TrainConfig, clip_gradients, init_params, lr_at, sgd_step,
                       train)

__version__ = "0.1.0"
