"""Latent-ODE forecaster with an external-predictor lookup, plus RNN and
LSTM baselines.

The forecaster encodes an observation window (reverse-chronological LSTM)
into a Gaussian posterior over the initial latent state, evolves a sampled
state with an MLP dynamics function whose input is the latent concatenated
with the interpolated climate predictors w(t), and decodes only the disease
variable at each requested time ("partial" decoding). Baselines are
plain recurrent cells fed (observation, time-gap) pairs that self-feed
their own predictions beyond the observed window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, concat
from .climate import PredictorInterpolant
from .odeint import OdeProblem, euler_integrate

MODEL_KINDS = ("latent_ode", "rnn", "lstm")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "latent_ode"
    input_dim: int = 4            # observation channels fed to the encoder (y, rh, t, cm)
    predictor_dim: int = 3        # climate channels in the lookup w(t)
    latent_dim: int = 32
    encoder_hidden: int = 64
    dynamics_hidden: tuple[int, ...] = (64, 64)
    decoder_hidden: tuple[int, ...] = (32,)
    baseline_hidden: int = 64

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        dims = (self.input_dim, self.predictor_dim, self.latent_dim, self.encoder_hidden,
                self.baseline_hidden, *self.dynamics_hidden, *self.decoder_hidden)
        if any(d < 1 for d in dims):
            raise ValueError("all model dimensions must be >= 1")

    @property
    def dynamics_input_dim(self) -> int:
        return self.latent_dim + self.predictor_dim


@dataclass(frozen=True)
class Window:
    """A contiguous dataset slice prepared for the models.

    times/observations cover only the mask-kept encoder grid points, with
    times rebased so the window starts at 0. target_times/target_y span the
    full encode+horizon grid and are never affected by drops. Observations
    and targets are in normalized units.
    """

    start: int
    n_encode: int
    horizon: int
    times: np.ndarray             # [K] kept times, step units, increasing
    observations: np.ndarray      # [K, 4] normalized (y, rh, t, cm)
    mask: np.ndarray              # [n_encode] bool, True = kept
    target_times: np.ndarray      # [n_encode + horizon]
    target_y: np.ndarray          # [n_encode + horizon] normalized
    split: str = "train"
    dataset_idx: int = 0

    def __post_init__(self):
        for name in ("times", "observations", "mask", "target_times", "target_y"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.times.size < 1:
            raise ValueError("window must keep at least one observed point")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("kept times must be strictly increasing")
        if int(self.mask.sum()) != len(self.times):
            raise ValueError("times must correspond exactly to mask-kept grid points")
        if not np.array_equal(np.flatnonzero(self.mask).astype(float), self.times):
            raise ValueError("times must equal the kept grid indices")
        if self.observations.shape != (len(self.times), 4):
            raise ValueError("observations must be [n_kept, 4]")
        if len(self.target_times) != self.n_encode + self.horizon or \
                len(self.target_y) != len(self.target_times):
            raise ValueError("target arrays must span the encode+horizon grid")

    @property
    def n_kept(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class LatentPosterior:
    """Gaussian q(z0 | window): mean and positive scale, [B, latent_dim]."""

    mu: Tensor
    sigma: Tensor


def _init_matrix(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)


def _mlp_params(rng, name: str, dims: list[int]) -> dict[str, Parameter]:
    params = {}
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        tag = f"{name}.{i}" if i < len(dims) - 2 else f"{name}.out"
        params[f"{tag}.w"] = Parameter(f"{tag}.w", _init_matrix(rng, a, b))
        params[f"{tag}.b"] = Parameter(f"{tag}.b", np.zeros(b))
    return params


def _mlp_apply(params: dict[str, Parameter], name: str, n_hidden: int, x: Tensor) -> Tensor:
    """tanh hidden layers, linear output layer."""
    h = x
    for i in range(n_hidden):
        h = (h @ params[f"{name}.{i}.w"] + params[f"{name}.{i}.b"]).tanh()
    return h @ params[f"{name}.out.w"] + params[f"{name}.out.b"]


def _lstm_step(wx: Parameter, wh: Parameter, b: Parameter, hidden: int,
               x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    pre = x @ wx + h @ wh + b
    i = pre[:, 0 * hidden:1 * hidden].sigmoid()
    f = pre[:, 1 * hidden:2 * hidden].sigmoid()
    g = pre[:, 2 * hidden:3 * hidden].tanh()
    o = pre[:, 3 * hidden:4 * hidden].sigmoid()
    c_new = f * c + i * g
    h_new = o * c_new.tanh()
    return h_new, c_new


def _check_same_grid(windows: list[Window]) -> None:
    first = windows[0]
    for w in windows[1:]:
        if not np.array_equal(w.times, first.times) or w.horizon != first.horizon:
            raise ValueError("batched windows must share the same kept-time grid")


class LatentODEForecaster:
    """Encoder -> latent Gaussian -> predictor-augmented ODE -> partial decoder."""

    kind = "latent_ode"

    def __init__(self, cfg: ModelConfig, seed: int = 0,
                 params: dict[str, Parameter] | None = None):
        if cfg.kind != "latent_ode":
            raise ValueError("config kind must be latent_ode")
        self.cfg = cfg
        self.params = params if params is not None else self._init_params(seed)

    def _init_params(self, seed: int) -> dict[str, Parameter]:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        hid, lat = cfg.encoder_hidden, cfg.latent_dim
        params = {
            "enc.wx": Parameter("enc.wx", _init_matrix(rng, cfg.input_dim + 1, 4 * hid)),
            "enc.wh": Parameter("enc.wh", _init_matrix(rng, hid, 4 * hid)),
            "enc.b": Parameter("enc.b", _forget_bias(hid)),
            "enc.head.w": Parameter("enc.head.w", _init_matrix(rng, hid, 2 * lat)),
            "enc.head.b": Parameter("enc.head.b", np.zeros(2 * lat)),
        }
        params.update(_mlp_params(rng, "dyn", [cfg.dynamics_input_dim, *cfg.dynamics_hidden, lat]))
        params.update(_mlp_params(rng, "dec", [lat, *cfg.decoder_hidden, 1]))
        # start from zero flow: trajectories stay near z0 until the decoder
        # finds the level, which keeps the long unrolled solve trainable
        params["dyn.out.w"].data[...] = 0.0
        return params

    def encode(self, windows: list[Window] | Window) -> LatentPosterior:
        """Run the LSTM over kept observations in reverse chronological order.

        Each step's input is the normalized 4-vector concatenated with the
        time gap since the previously consumed (later) point; the first
        consumed point gets gap 0. The final hidden state maps linearly to
        (mu, log sigma).
        """
        if isinstance(windows, Window):
            windows = [windows]
        if not windows:
            raise ValueError("need at least one window")
        _check_same_grid(windows)
        cfg = self.cfg
        batch = len(windows)
        times = windows[0].times
        obs = np.stack([w.observations for w in windows])  # [B, K, 4]

        hid = cfg.encoder_hidden
        h = Tensor(np.zeros((batch, hid)))
        c = Tensor(np.zeros((batch, hid)))
        prev_t = None
        for j in range(len(times) - 1, -1, -1):
            dt = 0.0 if prev_t is None else prev_t - times[j]
            x = Tensor(np.concatenate([obs[:, j, :], np.full((batch, 1), dt)], axis=1))
            h, c = _lstm_step(self.params["enc.wx"], self.params["enc.wh"],
                              self.params["enc.b"], hid, x, h, c)
            prev_t = times[j]
        head = h @ self.params["enc.head.w"] + self.params["enc.head.b"]
        mu = head[:, :cfg.latent_dim]
        sigma = head[:, cfg.latent_dim:].exp()
        return LatentPosterior(mu=mu, sigma=sigma)

    @staticmethod
    def sample_latent(posterior: LatentPosterior, noise: np.ndarray | None) -> Tensor:
        """Reparameterized draw z0 = mu + sigma * noise; noise None means 0."""
        if noise is None:
            return posterior.mu
        return posterior.mu + posterior.sigma * Tensor(noise)

    def _predictor_values(self, predictors: PredictorInterpolant,
                          starts: np.ndarray, t: float) -> np.ndarray:
        return np.stack([predictors.at(s + t) for s in starts])

    def dynamics(self, z: Tensor, t: float, predictors: PredictorInterpolant,
                 starts: np.ndarray) -> Tensor:
        """dz/dt = MLP(concat(z, w(t))); t in window units, starts map to the
        absolute grid."""
        w_t = Tensor(self._predictor_values(predictors, starts, t))
        x = concat([z, w_t], axis=1)
        return _mlp_apply(self.params, "dyn", len(self.cfg.dynamics_hidden), x)

    def decode(self, z: Tensor) -> Tensor:
        """Map a latent state to the (normalized) disease variable only."""
        return _mlp_apply(self.params, "dec", len(self.cfg.decoder_hidden), z)

    def posterior_and_forward(self, windows, predictors, output_times, noise,
                              solver_step: float = 1.0) -> tuple[LatentPosterior, Tensor]:
        """encode -> sample -> integrate -> decode each state.

        Returns the posterior (for KL-regularized losses) and predictions
        [B, len(output_times)] in normalized units. output_times are
        window-relative and must start at the window origin (time of z0).
        Deterministic given (params, windows, noise).
        """
        if isinstance(windows, Window):
            windows = [windows]
        if len(output_times) == 0 or float(output_times[0]) != 0.0:
            raise ValueError("first output time must be the window origin (0)")
        posterior = self.encode(windows)
        z0 = self.sample_latent(posterior, noise)
        starts = np.array([w.start for w in windows], dtype=np.float64)

        def f(z, t):
            return self.dynamics(z, t, predictors, starts)

        states = euler_integrate(OdeProblem(f, z0, list(output_times)), h=solver_step)
        return posterior, concat([self.decode(z) for z in states], axis=1)

    def forward(self, windows: list[Window] | Window, predictors: PredictorInterpolant,
                output_times: np.ndarray, noise: np.ndarray | None = None,
                solver_step: float = 1.0) -> Tensor:
        """Predictions only; see posterior_and_forward."""
        return self.posterior_and_forward(windows, predictors, output_times,
                                          noise, solver_step)[1]


def _forget_bias(hidden: int) -> np.ndarray:
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return b


class RecurrentBaseline:
    """tanh-RNN or LSTM with a per-step linear head emitting the disease variable.

    Each input is the normalized 4-vector concatenated with the time gap
    since the previous step. Beyond the observed window (and at no other
    point) the y input channel is the cell's own previous prediction.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0,
                 params: dict[str, Parameter] | None = None):
        if cfg.kind not in ("rnn", "lstm"):
            raise ValueError("config kind must be rnn or lstm")
        self.cfg = cfg
        self.kind = cfg.kind
        self.params = params if params is not None else self._init_params(seed)

    def _init_params(self, seed: int) -> dict[str, Parameter]:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        hid = cfg.baseline_hidden
        gates = 4 * hid if self.kind == "lstm" else hid
        bias = _forget_bias(hid) if self.kind == "lstm" else np.zeros(hid)
        return {
            "cell.wx": Parameter("cell.wx", _init_matrix(rng, cfg.input_dim + 1, gates)),
            "cell.wh": Parameter("cell.wh", _init_matrix(rng, hid, gates)),
            "cell.b": Parameter("cell.b", bias),
            "head.w": Parameter("head.w", _init_matrix(rng, hid, 1)),
            "head.b": Parameter("head.b", np.zeros(1)),
        }

    def init_state(self, batch: int):
        hid = self.cfg.baseline_hidden
        h = Tensor(np.zeros((batch, hid)))
        if self.kind == "lstm":
            return h, Tensor(np.zeros((batch, hid)))
        return h, None

    def step(self, state, x: Tensor):
        """One cell update on a [B, 5] input; returns (state, y_hat [B, 1])."""
        h, c = state
        if self.kind == "lstm":
            h, c = _lstm_step(self.params["cell.wx"], self.params["cell.wh"],
                              self.params["cell.b"], self.cfg.baseline_hidden, x, h, c)
        else:
            h = (x @ self.params["cell.wx"] + h @ self.params["cell.wh"]
                 + self.params["cell.b"]).tanh()
        y = h @ self.params["head.w"] + self.params["head.b"]
        return (h, c), y

    def predict(self, windows: list[Window] | Window, predictors: PredictorInterpolant,
                horizon: int) -> tuple[np.ndarray, Tensor]:
        """Consume kept observations (teacher-forced y), then roll the horizon
        grid self-feeding y. Returns (output times, predictions [B, K + horizon])."""
        if isinstance(windows, Window):
            windows = [windows]
        _check_same_grid(windows)
        if horizon > 0 and windows[0].horizon < horizon:
            raise ValueError(f"windows carry horizon {windows[0].horizon} < requested {horizon}")
        batch = len(windows)
        times = windows[0].times
        obs = np.stack([w.observations for w in windows])
        starts = np.array([w.start for w in windows], dtype=np.float64)

        state = self.init_state(batch)
        outputs: list[Tensor] = []
        prev_t = None
        for j, t in enumerate(times):
            dt = 0.0 if prev_t is None else t - prev_t
            x = Tensor(np.concatenate([obs[:, j, :], np.full((batch, 1), dt)], axis=1))
            state, y = self.step(state, x)
            outputs.append(y)
            prev_t = t

        out_times = list(times)
        n_encode = windows[0].n_encode
        for tau in range(n_encode, n_encode + horizon):
            dt = tau - prev_t
            climate = np.stack([predictors.at(s + tau) for s in starts])
            x = concat([outputs[-1], Tensor(np.concatenate(
                [climate, np.full((batch, 1), dt)], axis=1))], axis=1)
            state, y = self.step(state, x)
            outputs.append(y)
            prev_t = float(tau)
            out_times.append(float(tau))

        return np.array(out_times), concat(outputs, axis=1)


def build_model(cfg: ModelConfig, seed: int = 0, params: dict[str, Parameter] | None = None):
    if cfg.kind == "latent_ode":
        return LatentODEForecaster(cfg, seed=seed, params=params)
    return RecurrentBaseline(cfg, seed=seed, params=params)
