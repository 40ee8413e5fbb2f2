"""One-dimensional robot fish: survival by design, appetite by training.

The fish lives on an endless tape with food every ``food_period`` cells and
sees a three-cell window.  Two convolutional detectors with hand-set weights
feed an action layer:

* food-here neuron ``a_fh``: kernel [1, 0, 0], bias -0.5 — responds exactly
  when the first visible cell holds food (encoded 0.5).
* food-there neuron ``a_ft``: kernel [0, 1, 1], bias -0.5 — responds when
  food is visible ahead.

Both pass through the selective activation, so a perfect match reads 1.0 and
everything else stays near zero.  The action layer maps [a_fh, a_ft, F]
(F = energy) to [eat, move] logits; its initial weights encode "eat only
when food is here and energy is low, otherwise move".

A frozen judge network (the fish's PFC) watches each decision.  Its three
gate neurons read the state vector v0 = [a_fh, a_ft, F, e, m] (e, m are the
softmaxed action probabilities) through fixed rows:

* e1 = tau(a_fh - F + e): ate while hungry with food present,
* m1 = tau(a_ft - F + m): moved toward visible food,
* ex = tau(-a_fh - a_ft + m): explored when nothing was visible.

The judge sums the gates into [True, False] logits.  Training accumulates
the last ``mem`` judgments into z, takes the cross entropy of z against its
own argmax, and backpropagates into the action layer only: the fish teaches
itself to eat more eagerly without any external reward.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np

from .autodiff import (
    DiffTensor,
    SgdSettings,
    as_tensor,
    backward,
    concat,
    parameter,
    sgd_step,
)
from .layers import (
    conv1d,
    cross_entropy_self,
    fully_connected,
    selective_activation,
    softmax,
    threshold_activation,
)

EAT, MOVE = 0, 1
ACTION_NAMES = ("eat", "move")

FOOD_VALUE = 0.5

# Detector table: kernel and bias per output neuron.
FH_KERNEL = (1.0, 0.0, 0.0)
FH_BIAS = -0.5
FT_KERNEL = (0.0, 1.0, 1.0)
FT_BIAS = -0.5

# Judge gate rows over v0 = [a_fh, a_ft, F, e, m].
PFC_ROWS = (
    (1.0, 0.0, -1.0, 1.0, 0.0),   # e1
    (0.0, 1.0, -1.0, 0.0, 1.0),   # m1
    (-1.0, -1.0, 0.0, 0.0, 1.0),  # ex
)

# True-row weights the e1 gate heavily: near the eat/move boundary the e1
# pre-activation saturates while m1 does not, and an even weighting would
# push training toward "always move".  The false row mirrors the true row;
# its bias makes an all-quiet gate vector read as False.
JUDGE_TRUE_ROW = (3.0, 1.0, 1.0)
JUDGE_FALSE_BIAS = 1.2


@dataclass
class FishConfig:
    food_period: int = 5
    energy_decay: float = 0.05
    selective_eps: float = 0.01
    initial_energy: float = 1.0
    mem: int = 8
    learning_rate: float = 0.5
    eat_bias: float = 0.0
    move_delta: float = 0.01


class DeadFishError(RuntimeError):
    """Raised when stepping a fish whose energy already reached zero."""


class FishWorld:
    """Three-cell view onto an endless tape with periodic food."""

    def __init__(self, phase: int = 0, food_period: int = 5):
        if food_period < 4:
            raise ValueError("food_period must leave empty cells between food")
        self.food_period = food_period
        self.offset = phase % food_period
        self.window = np.array(
            [FOOD_VALUE if (self.offset + i) % food_period == 0 else 0.0
             for i in range(3)])

    @property
    def food_here(self) -> bool:
        return self.window[0] == FOOD_VALUE

    @property
    def food_there(self) -> bool:
        return FOOD_VALUE in self.window[1:]

    def roll_left(self) -> None:
        self.offset += 1
        incoming = FOOD_VALUE if (self.offset + 2) % self.food_period == 0 else 0.0
        self.window[0] = self.window[1]
        self.window[1] = self.window[2]
        self.window[2] = incoming

    def consume(self) -> None:
        self.window[0] = 0.0


@dataclass
class FishState:
    energy: float

    @property
    def alive(self) -> bool:
        return self.energy > 0.0


class FishNN:
    """Detectors plus the trainable action layer."""

    def __init__(self, config: FishConfig):
        self.config = config
        self.conv_fh = as_tensor(FH_KERNEL)
        self.bias_fh = as_tensor(FH_BIAS)
        self.conv_ft = as_tensor(FT_KERNEL)
        self.bias_ft = as_tensor(FT_BIAS)
        # rows: eat = (1, 0, -1), move = (delta, 1, 1); biases start at
        # (eat_bias, 0) so a half-full fish moves past food until trained
        self.w_act = parameter(np.array([
            [1.0, 0.0, -1.0],
            [config.move_delta, 1.0, 1.0],
        ]))
        self.b_act = parameter(np.array([config.eat_bias, 0.0]))

    def trainable(self) -> list[DiffTensor]:
        return [self.w_act, self.b_act]

    def sense(self, window: np.ndarray) -> tuple[DiffTensor, DiffTensor]:
        eps = self.config.selective_eps
        a_fh = selective_activation(conv1d(window, self.conv_fh, self.bias_fh), eps)
        a_ft = selective_activation(conv1d(window, self.conv_ft, self.bias_ft), eps)
        return a_fh, a_ft

    def decide(self, a_fh: DiffTensor, a_ft: DiffTensor,
               energy: float) -> tuple[DiffTensor, int]:
        x = concat([a_fh, a_ft, as_tensor(energy)])
        logits = fully_connected(x, self.w_act, self.b_act)
        return logits, int(np.argmax(logits.values))

    def sense_values(self, window: np.ndarray) -> tuple[float, float]:
        """Plain-float twin of sense() for the evaluation loop."""
        eps = self.config.selective_eps
        y_fh = float(window @ self._fh_k) + FH_BIAS
        y_ft = float(window @ self._ft_k) + FT_BIAS
        return eps / (y_fh * y_fh + eps), eps / (y_ft * y_ft + eps)

    @property
    def _fh_k(self) -> np.ndarray:
        return self.conv_fh.values

    @property
    def _ft_k(self) -> np.ndarray:
        return self.conv_ft.values

    def decide_values(self, a_fh: float, a_ft: float,
                      energy: float) -> tuple[np.ndarray, int]:
        logits = self.w_act.values @ (a_fh, a_ft, energy) + self.b_act.values
        return logits, int(np.argmax(logits))

    def export_params(self) -> dict:
        return {"w_act": self.w_act.values.copy(), "b_act": self.b_act.values.copy()}

    def import_params(self, params: dict) -> None:
        self.w_act.values[...] = params["w_act"]
        self.b_act.values[...] = params["b_act"]


class FishPFC:
    """Frozen judge emitting [True, False] logits for one decision."""

    def __init__(self):
        self.rows = [as_tensor(row) for row in PFC_ROWS]
        true_row = np.array(JUDGE_TRUE_ROW)
        self.judge_w = as_tensor(np.stack([true_row, -true_row]))
        self.judge_b = as_tensor(np.array([0.0, JUDGE_FALSE_BIAS]))

    def judge(self, v0: DiffTensor) -> DiffTensor:
        gates = concat([threshold_activation(conv1d(v0, row)) for row in self.rows])
        return fully_connected(gates, self.judge_w, self.judge_b)

    def judge_values(self, v0: np.ndarray) -> np.ndarray:
        """Plain-float twin of judge() for the evaluation loop."""
        pre = np.asarray(PFC_ROWS) @ v0
        leaked = np.where(pre >= 0, pre, 0.01 * pre)
        gates = np.tanh(leaked)
        return self.judge_w.values @ gates + self.judge_b.values


def pfc_judge(pfc: FishPFC, nn: FishNN, a_fh: DiffTensor, a_ft: DiffTensor,
              energy: float, logits: DiffTensor) -> DiffTensor:
    """Assemble v0 = [a_fh, a_ft, F, softmax(logits)] and run the judge."""
    probs = softmax(logits)
    v0 = concat([a_fh, a_ft, as_tensor(energy), probs])
    return pfc.judge(v0)


class DecisionMemory:
    """Sliding window over the last ``mem`` judge outputs; z is their sum."""

    def __init__(self, mem: int = 8):
        self.mem = mem
        self.buffer: deque[DiffTensor] = deque(maxlen=mem)

    def push(self, judgment: DiffTensor) -> None:
        self.buffer.append(judgment)

    @property
    def full(self) -> bool:
        return len(self.buffer) == self.mem

    def z(self) -> DiffTensor:
        if not self.buffer:
            raise ValueError("decision memory is empty")
        return reduce(lambda a, b: a + b, self.buffer)


def world_step(world: FishWorld, state: FishState, action: int,
               config: FishConfig) -> tuple[FishWorld, FishState]:
    """Apply decay, then the action: eat restores energy if food is here."""
    if not state.alive:
        raise DeadFishError("cannot step a dead fish")
    state.energy = max(0.0, state.energy - config.energy_decay)
    if action == EAT:
        if world.food_here:
            state.energy = 1.0
            world.consume()
    else:
        world.roll_left()
    return world, state


def make_world(seed: int | None, config: FishConfig) -> tuple[FishWorld, FishState]:
    """Fresh world; the seed randomizes the tape phase."""
    phase = 0
    if seed is not None:
        phase = int(np.random.default_rng(seed).integers(config.food_period))
    return FishWorld(phase, config.food_period), FishState(config.initial_energy)


def run_episode(nn: FishNN, pfc: FishPFC, world: FishWorld, state: FishState,
                steps: int) -> list[dict]:
    """Run the live loop without learning; one trace record per step.

    Each record holds the decision-time energy and food flags, the action
    taken, and the judge's verdict on that decision.
    """
    trace = []
    config = nn.config
    for step in range(steps):
        a_fh, a_ft = nn.sense_values(world.window)
        logits, action = nn.decide_values(a_fh, a_ft, state.energy)
        shifted = np.exp(logits - logits.max())
        probs = shifted / shifted.sum()
        v0 = np.array([a_fh, a_ft, state.energy, probs[0], probs[1]])
        verdict = pfc.judge_values(v0)
        trace.append({
            "step": step,
            "F": state.energy,
            "food_here": world.food_here,
            "food_there": world.food_there,
            "action": ACTION_NAMES[action],
            "judge": "T" if int(np.argmax(verdict)) == 0 else "F",
        })
        world_step(world, state, action, config)
    return trace


def srd_train(steps: int, config: FishConfig | None = None,
              seed: int | None = None) -> tuple[FishNN, FishPFC, list[float]]:
    """Live training loop: act, judge, and descend the self-labelled loss.

    Every step pushes the judge output into the decision memory; once the
    window is full, loss = cross_entropy(z, argmax z) is backpropagated into
    the action layer and one SGD step applied.  Detectors and judge stay
    frozen throughout.
    """
    config = config or FishConfig()
    nn = FishNN(config)
    pfc = FishPFC()
    world, state = make_world(seed, config)
    memory = DecisionMemory(config.mem)
    settings = SgdSettings(config.learning_rate)
    losses: list[float] = []
    for _ in range(steps):
        a_fh, a_ft = nn.sense(world.window)
        logits, action = nn.decide(a_fh, a_ft, state.energy)
        verdict = pfc_judge(pfc, nn, a_fh, a_ft, state.energy, logits)
        memory.push(verdict)
        if memory.full:
            loss = cross_entropy_self(memory.z())
            backward(loss)
            sgd_step(nn.trainable(), settings)
            losses.append(loss.item())
        world_step(world, state, action, config)
    return nn, pfc, losses
