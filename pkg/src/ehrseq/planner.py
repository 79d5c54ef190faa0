"""Encoder/decoder layer scheduling.

Builds CNN halving schedules (layer counts, then an alternating order),
transformer channel-reduction schedules with a terminal adaptive pool,
mirrored decoders, two-stage hierarchical compositions, compression rates,
and the latent search grid.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

# layer op kinds
LN = "Ln"        # temporal /2
LD = "Ld"        # channel /2
LND = "Lnd"      # both /2
LD1 = "Ld1"      # channel / factor (factor = 2^(q+1))
LD2 = "Ld2"      # channel / factor (factor = 2^q)
POOL = "pool"    # adaptive pool: temporal -> target
UN = "Un"        # temporal x2
UD = "Ud"        # channel x2
UND = "Und"      # both x2
XATTN = "xattn"  # cross-attention decoder block: channel x factor

CNN = "cnn"
TRANSFORMER = "transformer"
ENCODE = "encode"
DECODE = "decode"


class PlanError(ValueError):
    pass


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


def _log2(x: int) -> int:
    return x.bit_length() - 1


@dataclass(frozen=True)
class LayerOp:
    kind: str
    factor: int = 1   # power-of-two channel factor for Ld1/Ld2/xattn
    target: int = 0   # target temporal length for pool

    def __post_init__(self):
        if self.factor < 1 or not _is_pow2(self.factor):
            raise PlanError(f"layer factor {self.factor} must be a power of two >= 1")


@dataclass
class LayerPlan:
    backbone: str
    direction: str
    ops: list[LayerOp]
    input_shape: tuple[int, int]
    output_shape: tuple[int, int]


@dataclass(frozen=True)
class LatentSpec:
    t: int
    c: int

    def __post_init__(self):
        if not (_is_pow2(self.t) and _is_pow2(self.c)):
            raise PlanError(f"latent dims ({self.t},{self.c}) must be powers of two")

    @property
    def l(self) -> int:
        return self.t * self.c


@dataclass
class HierarchicalPlan:
    text_plan: LayerPlan    # per-event stage
    event_plan: LayerPlan   # cross-event stage
    intermediate_width: int  # flattened per-event width d'


def _require_pow2(**dims: int) -> None:
    for name, v in dims.items():
        if not _is_pow2(v):
            raise PlanError(f"{name}={v} must be a power of two")


def cnn_layer_counts(n: int, d: int, n_out: int, d_out: int) -> dict[str, int]:
    """Number of CNN layers by kind for compressing (n,d) -> (n_out,d_out)."""
    _require_pow2(n=n, d=d, n_out=n_out, d_out=d_out)
    if n_out > n or d_out > d:
        raise PlanError("CNN schedule cannot expand dimensions")
    r_n = _log2(n // n_out)
    r_d = _log2(d // d_out)
    n_l = max(r_n, r_d)
    if r_n > r_d:
        return {LND: r_d, LN: n_l - r_d, LD: 0}
    if r_n < r_d:
        return {LND: r_n, LN: 0, LD: n_l - r_n}
    return {LND: n_l, LN: 0, LD: 0}


def cnn_layer_order(counts: dict[str, int], r_n: int, r_d: int) -> list[str]:
    """Alternating order of CNN layer kinds.

    The surplus temporal layers in the r_n > r_d branch are distributed over
    the r_d + 1 slots around the Lnd layers; the r_n < r_d branch follows the
    published alternation cases verbatim.
    """
    n_l = max(r_n, r_d)
    if counts.get(LN, 0) > 0:
        num_block = (r_n - r_d) // (r_d + 1)
        num_rem = (r_n - r_d) % (r_d + 1)
        block_n = [LN] * max(num_block, 0)
        block_alt = [LND] + block_n
        block_alt2 = block_alt + [LN]
        return block_alt * (r_d - num_rem) + block_alt2 * num_rem + block_n
    if counts.get(LD, 0) > 0:
        block_alt = [LND, LD]
        if n_l - 2 * (r_d - r_n) + 1 < 0:
            n_odd = n_l % 2
            return [LD] * n_odd + block_alt * r_n + [LD] * (n_l - 2 * r_n - n_odd)
        if 2 * r_n - r_d >= 0:
            num_alt = r_d - r_n
        else:
            num_alt = min(r_n, r_d // 2)
        if r_n - num_alt == r_d - 2 * num_alt:
            block_non_alt = [LND] * (r_n - num_alt)
        else:
            block_non_alt = [LD] * (r_d - 2 * num_alt)
        return block_non_alt + block_alt * num_alt
    return [LND] * n_l


def cnn_plan(n: int, d: int, n_out: int, d_out: int) -> LayerPlan:
    counts = cnn_layer_counts(n, d, n_out, d_out)
    r_n = _log2(n // n_out)
    r_d = _log2(d // d_out)
    order = cnn_layer_order(counts, r_n, r_d)
    ops = [LayerOp(kind) for kind in order]
    return LayerPlan(CNN, ENCODE, ops, (n, d), (n_out, d_out))


def transformer_plan(n: int, d: int, n_out: int, d_out: int, n_l: int) -> LayerPlan:
    """Channel-reduction schedule over n_l layers plus a terminal pool."""
    _require_pow2(n=n, d=d, n_out=n_out, d_out=d_out)
    if d_out > d:
        raise PlanError("transformer schedule cannot expand channels")
    if n_l < 1:
        raise PlanError("n_l must be >= 1")
    r_d = _log2(d // d_out)
    q, r = divmod(r_d, n_l)
    ops = [LayerOp(LD1, factor=2 ** (q + 1)) for _ in range(r)]
    ops += [LayerOp(LD2, factor=2 ** q) for _ in range(n_l - r)]
    ops.append(LayerOp(POOL, target=n_out))
    return LayerPlan(TRANSFORMER, ENCODE, ops, (n, d), (n_out, d_out))


_CNN_MIRROR = {LN: UN, LD: UD, LND: UND}


def mirror_decoder(enc: LayerPlan) -> LayerPlan:
    """Decoder structure inverting an encoder plan.

    CNN: ops reversed with each compression replaced by the matching
    expansion.  Transformer: a placeholder expansion back to the input
    length, then one cross-attention block per channel-halving step.
    """
    if enc.direction != ENCODE:
        raise PlanError("plan is already decode-direction")
    if enc.backbone == CNN:
        ops = [LayerOp(_CNN_MIRROR[op.kind]) for op in reversed(enc.ops)]
    else:
        n_in, d_in = enc.input_shape
        _, d_out = enc.output_shape
        r_d = _log2(d_in // d_out)
        ops = [LayerOp(POOL, target=n_in)]
        ops += [LayerOp(XATTN, factor=2) for _ in range(r_d)]
    return LayerPlan(enc.backbone, DECODE, ops, enc.output_shape, enc.input_shape)


def hierarchical_plan(n_e: int, n_tpe: int, d: int, latent: LatentSpec,
                      backbone: str,
                      intermediate: tuple[int, int] = (1, 128),
                      n_l: int = 2) -> HierarchicalPlan:
    """Two-stage composition: per-event text stage, then cross-event stage.

    The text stage compresses (n_tpe, d) to `intermediate`, whose flattened
    width feeds the event stage compressing (n_e, width) to (t, c).
    """
    _require_pow2(n_e=n_e, n_tpe=n_tpe, d=d)
    width = intermediate[0] * intermediate[1]
    if not _is_pow2(width):
        raise PlanError(f"intermediate width {width} must be a power of two")
    if backbone == CNN:
        text_plan = cnn_plan(n_tpe, d, *intermediate)
        event_plan = cnn_plan(n_e, width, latent.t, latent.c)
    elif backbone == TRANSFORMER:
        text_plan = transformer_plan(n_tpe, d, *intermediate, n_l=n_l)
        event_plan = transformer_plan(n_e, width, latent.t, latent.c, n_l=n_l)
    else:
        raise PlanError(f"unknown backbone {backbone!r}")
    return HierarchicalPlan(text_plan, event_plan, width)


def compression_rate_hier(n_e: int, n_tpe: int, d: int, l: int) -> int:
    volume = n_e * n_tpe * d
    if l <= 0 or volume % l:
        raise PlanError(f"latent size {l} does not divide input volume {volume}")
    return volume // l


def compression_rate_flat(n_t: int, d: int, l: int) -> int:
    volume = n_t * d
    if l <= 0 or volume % l:
        raise PlanError(f"latent size {l} does not divide input volume {volume}")
    return volume // l


def search_grid(l_min: int, l_max: int) -> list[tuple[int, list[LatentSpec]]]:
    """Latent sweep: l doubles from l_min to l_max; per l = 2^(2i-1) or 2^(2i),
    five specs with t from 2^(i-2) to 2^(i+2)."""
    _require_pow2(l_min=l_min, l_max=l_max)
    if l_min > l_max:
        raise PlanError("l_min must be <= l_max")
    grid = []
    l = l_min
    while l <= l_max:
        exp = _log2(l)
        i = (exp + 1) // 2
        specs = []
        for t_exp in range(i - 2, i + 3):
            t = 2 ** t_exp
            if t < 1 or l % t:
                raise PlanError(f"grid point t={t} infeasible for l={l}")
            specs.append(LatentSpec(t, l // t))
        grid.append((l, specs))
        l *= 2
    return grid


# --- plan document exchange format -----------------------------------------

def save_plan(plan: LayerPlan, path: Path | str) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=2) + "\n")


def plan_to_dict(plan: LayerPlan) -> dict:
    return {
        "backbone": plan.backbone,
        "direction": plan.direction,
        "input_shape": list(plan.input_shape),
        "output_shape": list(plan.output_shape),
        "ops": [asdict(op) for op in plan.ops],
    }


def load_plan(path: Path | str) -> LayerPlan:
    raw = json.loads(Path(path).read_text())
    return LayerPlan(
        backbone=raw["backbone"],
        direction=raw["direction"],
        ops=[LayerOp(**op) for op in raw["ops"]],
        input_shape=tuple(raw["input_shape"]),
        output_shape=tuple(raw["output_shape"]),
    )
