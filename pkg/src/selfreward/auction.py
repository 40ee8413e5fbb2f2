"""Fish-sale auction: a server state machine and interpretable negotiators.

A server offers one kind of fish, encoded as the vector
(p, l, w, g, st1, st2, st3, f): price, three quality variables normalized
to 1, three sub-type flags in {-0.5, +0.5}, and f, the fraction of
participants who voted to buy in the previous round.  Each round the server
collects buy / hold / quit decisions from the active agents and branches:

* more buys than stock: price is marked up, nobody buys,
* fewer buys than stock: all buyers purchase, price is marked down,
* buys equal stock (and nonzero): all buyers purchase, auction ends.

Every agent runs a Fish Sale Negotiator (FSN), a small network whose every
weight is hand-set.  The external-sensor stage holds four named neurons:

* PG (price gauge): responds to price above the baseline b=5, slightly
  depressed by good quality,
* SZ (size): responds to length and weight,
* LSR (limited supply rush): responds to the previous round's demand f,
* ST (sub-type match): a match detector peaking when all three sub-type
  flags equal +0.5.

Inputs are cloned into D_ic interleaved copies with small Gaussian noise
and read through a dilated convolution, giving D_ic instances of each
neuron that are averaged: augmentation happens inside the agent, so only
the bare offer crosses the wire.  A decision layer maps (PG, SZ, LSR, ST)
to buy / hold / quit logits, and a frozen judge scores each decision:
holding at a high price and buying at a low one read True, quitting on a
desirable fish reads False.  During the first few rounds agents may run a
few self-labelled fine-tuning steps on perturbed copies of the offer.

The decision-layer magnitudes used here were chosen so that demand is
price-elastic (agents flip from buy to hold as the price climbs) and so
that impatient agents in a dead market occasionally quit; the sign pattern
of every weight keeps its stated meaning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    DiffTensor,
    SgdSettings,
    as_tensor,
    backward,
    concat,
    pick,
    sgd_step,
)

__all__ = [
    "AuctionConfig", "AuctionState", "AlwaysHoldModel", "FsnModel", "Offer",
    "TrialResult", "base_offer", "make_offer_variants", "run_auction",
    "run_experiment", "screen_model", "server_step", "srd_finetune",
]
from .layers import (
    conv1d,
    cross_entropy_self,
    fully_connected,
    selective_activation,
    threshold_activation,
)

BUY, HOLD, QUIT = 0, 1, 2
DECISION_NAMES = ("buy", "hold", "quit")

PG, SZ, LSR, ST = 0, 1, 2, 3

BASE_PRICE = 5.0
DELTA = 0.001

# Decision layer defaults: rows map (PG, SZ, LSR, ST) to (B, L, Q) logits.
# PG pushes against buying and for holding; quality pushes for buying and
# against quitting; the quit bias makes a weak-intent agent in a dead,
# low-price market occasionally walk away.  Magnitudes are set so demand
# declines gradually as the price climbs past the baseline and so the
# demand feedback (LSR) shifts intent without herding cliffs.
W_DECISION = np.array([
    [-1.0, 1.0, 0.1, 1.0],     # B
    [1.3, 0.0, -0.05, 0.0],    # L
    [-0.5, -1.0, -2.0, -1.0],  # Q
])
B_DECISION = np.array([-0.06, 0.0, 3.05])
BIAS_SPREAD = 0.1

JUDGE_FALSE_BIAS = 0.3

# Judge gate rows over (PG, SZ, LSR, ST, B, L, Q): PGL, BC, FQ.
_PFC_GATES_W = as_tensor(np.array([
    [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],               # PGL: PG + L - 1
    [-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],              # BC: B - PG
    [0.0, 1 / 3, 1 / 3, 1 / 3, 0.0, 0.0, 1.0],         # FQ: Q + mean(quality) - 1
]))
_PFC_GATES_B = as_tensor(np.array([-1.0, 0.0, -1.0]))
_PFC_OUT_W = as_tensor(np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
_PFC_OUT_B = as_tensor(np.array([0.0, JUDGE_FALSE_BIAS]))


@dataclass
class AuctionConfig:
    n_agents: int = 64
    base_price: float = BASE_PRICE
    price_step: float = 0.05
    max_rounds: int = 64
    d_ic: int = 5
    clone_noise: float = 0.01
    variant_count: int = 16
    variant_scale: float = 0.05
    variant_flip_prob: float = 0.2
    finetune_rounds: int = 4
    selective_eps: float = 0.01


@dataclass
class Offer:
    """One fish offer: the 8-entry vector the agents evaluate."""

    price: float = BASE_PRICE
    length: float = 1.0
    weight: float = 1.0
    gill: float = 1.0
    subtype: tuple = (0.5, 0.5, 0.5)
    demand: float = 0.5

    def as_array(self) -> np.ndarray:
        return np.array([self.price, self.length, self.weight, self.gill,
                         *self.subtype, self.demand])


def base_offer() -> Offer:
    return Offer()


def make_offer_variants(base: Offer, count: int = 16,
                        seed=None, scale: float = 0.05,
                        flip_prob: float = 0.2) -> list[Offer]:
    """Perturbed copies of the base offer, the agents' fine-tuning set."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    variants = []
    for _ in range(count):
        factors = rng.uniform(1 - scale, 1 + scale, size=4)
        flips = rng.random(3) < flip_prob
        st = tuple(-s if f else s for s, f in zip(base.subtype, flips))
        variants.append(Offer(
            price=base.price * factors[0],
            length=base.length * factors[1],
            weight=base.weight * factors[2],
            gill=base.gill * factors[3],
            subtype=st,
            demand=base.demand,
        ))
    return variants


def es_weight_rows(delta: float = DELTA, base_price: float = BASE_PRICE) -> np.ndarray:
    """The four hand-set sensor kernels (before cloning)."""
    rows = np.full((4, 8), delta)
    rows[PG, 0] += 1.0 / base_price
    rows[PG, 1:4] += -2 * delta
    rows[SZ, 1:3] += 0.5
    rows[LSR, 7] += 1.0
    rows[ST, 4:7] += 1.0 / 3.0
    return rows


ES_BIASES = np.array([0.0, 0.0, 0.0, -0.5])


class FsnModel:
    """One agent's negotiator: frozen sensors, trainable decision layer."""

    def __init__(self, rng: np.random.Generator, config: AuctionConfig | None = None):
        self.config = config or AuctionConfig()
        self.es_rows = es_weight_rows(base_price=self.config.base_price)
        self.es_biases = ES_BIASES.copy()
        self.w_dec = DiffTensor(W_DECISION.copy(), requires_grad=True)
        bias_noise = rng.uniform(-BIAS_SPREAD, BIAS_SPREAD, size=3)
        self.b_dec = DiffTensor(B_DECISION + bias_noise, requires_grad=True)
        # optimizer settings differ per agent; epochs == 0 opts out entirely
        self.epochs = int(rng.integers(0, 3))
        self.batch_size = int(rng.integers(4, 16))
        self.learning_rate = float(rng.uniform(1e-7, 1e-4))
        self.noise_rng = np.random.default_rng(rng.integers(2 ** 63))

    @property
    def malicious(self) -> bool:
        return False

    def trainable(self) -> list[DiffTensor]:
        return [self.w_dec, self.b_dec]

    # -- forward passes -------------------------------------------------------

    def _interleaved(self, x: np.ndarray) -> np.ndarray:
        """Clone each variable D_ic times; clones beyond the first get noise."""
        cfg = self.config
        block = np.repeat(x[:, None], cfg.d_ic, axis=1)
        block[:, 1:] += self.noise_rng.normal(0.0, cfg.clone_noise, size=(8, cfg.d_ic - 1))
        return block.ravel()

    def es_forward(self, x: np.ndarray) -> DiffTensor:
        """Sensor activations (PG, SZ, LSR, ST) for one offer vector."""
        cfg = self.config
        arr = as_tensor(self._interleaved(x))
        outs = []
        for i in range(4):
            conv = conv1d(arr, as_tensor(self.es_rows[i]), dilation=cfg.d_ic)
            pre = conv1d(conv, as_tensor(np.full(cfg.d_ic, 1.0 / cfg.d_ic))) \
                + as_tensor(self.es_biases[i])
            if i == ST:
                outs.append(selective_activation(pre, cfg.selective_eps))
            else:
                outs.append(threshold_activation(pick(pre, 0)))
        return concat(outs)

    def decide(self, x_es: DiffTensor) -> tuple[DiffTensor, int]:
        logits = fully_connected(x_es, self.w_dec, self.b_dec)
        return logits, int(np.argmax(logits.values))

    def pfc(self, x_es: DiffTensor, logits: DiffTensor) -> DiffTensor:
        """Judge logits [True, False] for the sensor state and decision.

        Gate neurons over (PG, SZ, LSR, ST, B, L, Q):
        PGL = tau(PG + L - 1)  held out at a high price (a correct call),
        BC  = tau(B - PG)      bought cheap (also correct),
        FQ  = tau(Q + (SZ + LSR + ST)/3 - 1)  quit on a desirable fish.
        True sums PGL and BC; False carries FQ plus a small default bias.
        """
        state = concat([x_es, logits])
        gates = threshold_activation(fully_connected(state, _PFC_GATES_W, _PFC_GATES_B))
        return fully_connected(gates, _PFC_OUT_W, _PFC_OUT_B)

    # -- fast evaluation path ---------------------------------------------------

    def es_forward_values(self, x: np.ndarray) -> np.ndarray:
        cfg = self.config
        arr = self._interleaved(x).reshape(8, cfg.d_ic)
        pre = self.es_rows @ arr
        pre = pre.mean(axis=1) + self.es_biases
        out = np.empty(4)
        leaked = np.where(pre[:3] >= 0, pre[:3], 0.01 * pre[:3])
        out[:3] = np.tanh(leaked)
        out[ST] = cfg.selective_eps / (pre[ST] ** 2 + cfg.selective_eps)
        return out

    def decide_values(self, x_es: np.ndarray) -> tuple[np.ndarray, int]:
        logits = self.w_dec.values @ x_es + self.b_dec.values
        return logits, int(np.argmax(logits))

    def decide_offer(self, offer: Offer) -> int:
        _, decision = self.decide_values(self.es_forward_values(offer.as_array()))
        return decision

    def export_params(self) -> dict:
        return {"w_dec": self.w_dec.values.copy(), "b_dec": self.b_dec.values.copy()}


class AlwaysHoldModel:
    """A malicious submission: holds forever to push the price down."""

    def __init__(self, rng: np.random.Generator, config: AuctionConfig | None = None):
        self.config = config or AuctionConfig()

    @property
    def malicious(self) -> bool:
        return True

    def decide_offer(self, offer: Offer) -> int:
        return HOLD

    def export_params(self) -> dict:
        return {}


def screen_model(model, config: AuctionConfig | None = None) -> bool:
    """Dummy screener: accept only constructor-shaped, non-hold-only models.

    Checks the sensor weights against the interpretable template, the
    decision sign pattern (PG against buying, quality for it), and probes a
    very cheap offer, which every sensible negotiator buys.
    """
    config = config or AuctionConfig()
    if not isinstance(model, FsnModel):
        return False
    if not np.allclose(model.es_rows, es_weight_rows(base_price=config.base_price)):
        return False
    signs = np.sign(model.w_dec.values[BUY])
    if not (signs[PG] < 0 and all(signs[i] > 0 for i in (SZ, LSR, ST))):
        return False
    probe = Offer(price=0.25 * config.base_price)
    return model.decide_offer(probe) == BUY


def srd_finetune(model, variants: list[Offer], k: int) -> None:
    """Self-labelled fine-tuning on the variant set; decision layer only.

    A no-op after the allowed window, for malicious models, and for agents
    whose sampled epoch count is zero.  The sensor stage holds no trainable
    weights, so its activations enter the loss graph as constants.
    """
    if k >= model.config.finetune_rounds or model.malicious or model.epochs == 0:
        return
    settings = SgdSettings(model.learning_rate)
    order_rng = model.noise_rng
    arrays = [v.as_array() for v in variants]
    for _ in range(model.epochs):
        order = order_rng.permutation(len(arrays))
        for start in range(0, len(order), model.batch_size):
            batch = order[start:start + model.batch_size]
            z = None
            for idx in batch:
                x_es = as_tensor(model.es_forward_values(arrays[idx]))
                logits, _ = model.decide(x_es)
                judged = model.pfc(x_es, logits)
                z = judged if z is None else z + judged
            loss = cross_entropy_self(z)
            backward(loss)
            sgd_step(model.trainable(), settings)


@dataclass
class Purchase:
    agent: int
    price: float
    round: int


@dataclass
class AuctionState:
    """Server-side bidding state for one auction."""

    config: AuctionConfig
    stock: int
    agents: list
    price: float
    demand_frac: float = 0.5
    k: int = 0
    status: list[str] = field(default_factory=list)
    ledger: list[Purchase] = field(default_factory=list)
    terminated: bool = False

    def __post_init__(self):
        if not self.status:
            self.status = ["active"] * len(self.agents)

    def active_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.status) if s == "active"]

    def current_offer(self) -> Offer:
        return Offer(price=self.price, demand=self.demand_frac)


def server_step(state: AuctionState) -> AuctionState:
    """One bidding round: collect decisions, then branch on demand."""
    if state.terminated:
        raise RuntimeError("cannot step a terminated auction")
    cfg = state.config
    active_before = state.active_indices()
    offer = state.current_offer()
    decisions = {i: state.agents[i].decide_offer(offer) for i in active_before}

    buyers = [i for i, d in decisions.items() if d == BUY]
    quitters = [i for i, d in decisions.items() if d == QUIT]
    n_buy = len(buyers)

    for i in quitters:
        state.status[i] = "quit"

    if n_buy > state.stock:
        state.price *= 1 + cfg.price_step
    else:
        for i in buyers:
            state.status[i] = "bought"
            state.ledger.append(Purchase(agent=i, price=state.price, round=state.k))
        state.stock -= n_buy
        if n_buy and state.stock == 0:
            state.terminated = True
        else:
            state.price *= 1 - cfg.price_step

    state.demand_frac = n_buy / len(active_before) if active_before else 0.0
    state.k += 1
    if state.stock == 0 or not state.active_indices() or state.k >= cfg.max_rounds:
        state.terminated = True
    return state


@dataclass
class TrialResult:
    r: float
    available: int
    prices: list[float]
    purchase_rate: float
    rounds: int

    @property
    def units_sold(self) -> int:
        return len(self.prices)

    @property
    def mean_price(self) -> float:
        return float(np.mean(self.prices)) if self.prices else float("nan")


def run_auction(r: float, n: int = 64, optim: bool = False,
                malicious_frac: float = 0.0, seed=None,
                config: AuctionConfig | None = None,
                return_state: bool = False):
    """One full auction with n agents and round(r*n) units of stock."""
    if not 0 < r <= 1:
        raise ValueError(f"item-supply fraction r must be in (0, 1], got {r}")
    if not 0 <= malicious_frac <= 1:
        raise ValueError(f"malicious_frac must be in [0, 1], got {malicious_frac}")
    config = config or AuctionConfig()
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)

    n_malicious = round(malicious_frac * n)
    agents = []
    for i in range(n):
        agent_rng = np.random.default_rng(np.random.SeedSequence(
            entropy=root.entropy, spawn_key=root.spawn_key + (1, i)))
        if i < n_malicious:
            agents.append(AlwaysHoldModel(agent_rng, config))
        else:
            agents.append(FsnModel(agent_rng, config))

    # screening: flagged models enter only when malicious mode is explicit
    admitted = []
    for agent in agents:
        if screen_model(agent, config):
            admitted.append(agent)
        elif malicious_frac > 0:
            admitted.append(agent)
        else:
            raise RuntimeError("screener flagged a model outside malicious mode")

    variants_seed = np.random.SeedSequence(entropy=root.entropy,
                                           spawn_key=root.spawn_key + (0,))
    variants = make_offer_variants(
        base_offer(), config.variant_count, variants_seed,
        scale=config.variant_scale, flip_prob=config.variant_flip_prob)

    stock = round(r * n)
    state = AuctionState(config=config, stock=stock, agents=admitted,
                         price=config.base_price)
    while not state.terminated:
        if optim and state.k < config.finetune_rounds:
            for i in state.active_indices():
                srd_finetune(state.agents[i], variants, state.k)
        server_step(state)

    result = TrialResult(
        r=r,
        available=stock,
        prices=[p.price for p in state.ledger],
        purchase_rate=len(state.ledger) / stock if stock else 0.0,
        rounds=state.k,
    )
    return (result, state) if return_state else result


CONDITIONS = {
    "noOptim": (False, 0.0),
    "Optim": (True, 0.0),
    "malicious-noOptim": (False, 0.5),
    "malicious-Optim": (True, 0.5),
}


def run_experiment(r_grid, trials: int = 10, conditions=None, seed=None,
                   n: int = 64, config: AuctionConfig | None = None,
                   malicious_frac: float = 0.5):
    """Repeated auctions over the supply grid; one summary row per trial.

    The per-(r, trial) seed is independent of the condition, so honest and
    malicious runs are matched: honest agents keep identical construction
    streams in both.
    """
    conditions = conditions or list(CONDITIONS)
    root = np.random.SeedSequence(seed)
    rows = []
    purchases = []
    for name in conditions:
        optim, frac = CONDITIONS[name]
        frac = malicious_frac if frac else 0.0
        for ri, r in enumerate(r_grid):
            for trial in range(trials):
                trial_seed = np.random.SeedSequence(
                    entropy=root.entropy, spawn_key=(ri, trial))
                result = run_auction(r, n=n, optim=optim, malicious_frac=frac,
                                     seed=trial_seed, config=config)
                rows.append({
                    "condition": name,
                    "r": r,
                    "trial": trial,
                    "price": result.mean_price,
                    "purchase_rate": result.purchase_rate,
                })
                for p in result.prices:
                    purchases.append({
                        "condition": name, "r": r, "trial": trial, "price": p,
                    })
    return rows, purchases
