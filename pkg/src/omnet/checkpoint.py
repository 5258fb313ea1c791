"""Byte-exact run checkpoints.

A checkpoint captures everything a run owns: network and optimizer
arrays, frozen masks, every rng stream, the replay ring, the live
episode, counters and logs. Loading rebuilds a Trainer that continues
bit-for-bit as if the run had never stopped.

Layout: a fixed header, a canonical JSON document for scalars and logs,
then raw little-endian array blobs in manifest order. The same trainer
state always writes the same bytes.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .agent import (EpisodeRecord, EvalResult, SacConfig, StepRecord,
                    Trainer, TrainLog)
from .masks import MaskSet
from .maze import EnvState, format_maze_config, parse_maze_config

_MAGIC = b"OMCK"
_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def _rng_state(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def _set_rng_state(gen: np.random.Generator, state: dict) -> None:
    gen.bit_generator.state = state


def _log_doc(log: TrainLog) -> dict:
    return {
        "steps": [[r.env_step, r.grad_steps, r.critic_loss, r.actor_loss,
                   r.alpha] for r in log.steps],
        "episodes": [[e.grad_step, e.subnet, e.ret, e.success,
                      [list(p) for p in e.positions]] for e in log.episodes],
        "evals": [[v.env_step, v.mean_return, list(v.returns),
                   list(v.subnets), v.success_rate] for v in log.evals],
        "positions": [list(p) for p in log.positions],
        "first_success_step": log.first_success_step,
    }


def _log_from_doc(doc: dict) -> TrainLog:
    log = TrainLog()
    log.steps = [StepRecord(int(s), int(g), float(c), float(a), float(al))
                 for s, g, c, a, al in doc["steps"]]
    log.episodes = [EpisodeRecord(int(g), int(sub), float(r), bool(ok),
                                  [tuple(p) for p in pos])
                    for g, sub, r, ok, pos in doc["episodes"]]
    log.evals = [EvalResult(int(s), float(m), tuple(r), tuple(ids), float(sr))
                 for s, m, r, ids, sr in doc["evals"]]
    log.positions = [(int(s), float(x), float(y))
                     for s, x, y in doc["positions"]]
    fss = doc["first_success_step"]
    log.first_success_step = None if fss is None else int(fss)
    return log


def _collect_arrays(trainer: Trainer) -> list:
    """(name, array) pairs written as raw blobs, in a fixed order."""
    ag = trainer.agent
    items = []
    for i, p in enumerate(ag.critics):
        items.append((f"critic{i}", p.theta))
    for i, p in enumerate(ag.targets):
        items.append((f"target{i}", p.theta))
    for i, o in enumerate(ag.critic_opts):
        items.append((f"critic_opt{i}.m", o.m))
        items.append((f"critic_opt{i}.v", o.v))
    items.append(("actor", ag.actor.theta))
    items.append(("actor_opt.m", ag.actor_opt.m))
    items.append(("actor_opt.v", ag.actor_opt.v))
    buf = trainer.buffer
    for name in ("s", "a", "r", "s_next", "done"):
        items.append((f"buffer.{name}", getattr(buf, name)[:buf.size]))
    if trainer._obs is not None:
        items.append(("obs", trainer._obs))
    if isinstance(trainer._ep_subnet, np.ndarray):
        items.append(("ep_subnet_mask", trainer._ep_subnet))
    return items


def _subnet_token_doc(token) -> dict:
    if token is None:
        return {"kind": "none"}
    if isinstance(token, np.ndarray):
        return {"kind": "mask"}           # stored in the array section
    return {"kind": "int", "value": int(token)}


def save_checkpoint(trainer: Trainer, path) -> None:
    ag = trainer.agent
    env_state = None
    if trainer.env.state is not None:
        st = trainer.env.state
        env_state = {"position": [float(v) for v in st.position],
                     "step_count": int(st.step_count),
                     "noise": [float(v) for v in st.noise],
                     "finished": bool(st.finished)}
    arrays = _collect_arrays(trainer)
    blobs = []
    if ag.critic_masks is not None:
        blobs.append(("critic_masks", ag.critic_masks.to_bytes()))
    if ag.actor_masks is not None:
        blobs.append(("actor_masks", ag.actor_masks.to_bytes()))
    doc = {
        "sac": dataclasses.asdict(ag.cfg),
        "maze": format_maze_config(trainer.maze_cfg),
        "trainer": {"seed": trainer.seed,
                    "noise_scale": trainer.noise_scale,
                    "eval_interval": trainer.eval_interval,
                    "eval_episodes": trainer.eval_episodes,
                    "env_step": trainer.env_step,
                    "grad_steps": trainer.grad_steps,
                    "eval_count": trainer.eval_count},
        "agent": {"log_alpha": ag.log_alpha, "alpha_m": ag.alpha_m,
                  "alpha_v": ag.alpha_v, "alpha_t": ag.alpha_t,
                  "target_entropy": ag.target_entropy,
                  "critic_opt_t": [o.t for o in ag.critic_opts],
                  "actor_opt_t": ag.actor_opt.t},
        "rngs": {"env": _rng_state(trainer.env.rng),
                 "subnet": _rng_state(ag.subnet_rng),
                 "batch": _rng_state(ag.batch_rng),
                 "action": _rng_state(ag.action_rng)},
        "buffer": {"size": trainer.buffer.size, "pos": trainer.buffer.pos,
                   "inserted": trainer.buffer.inserted},
        "env_state": env_state,
        "episode": {"active": trainer._obs is not None,
                    "subnet": _subnet_token_doc(trainer._ep_subnet),
                    "return": trainer._ep_return,
                    "positions": [list(p) for p in trainer._ep_positions]},
        "log": _log_doc(trainer.log),
        "arrays": [{"name": n, "dtype": a.dtype.str, "shape": list(a.shape)}
                   for n, a in arrays],
        "blobs": [{"name": n, "nbytes": len(b)} for n, b in blobs],
    }
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, len(payload)))
        fh.write(payload)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())
        for _, b in blobs:
            fh.write(b)


def load_trainer(path) -> Trainer:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise ValueError("not a checkpoint file")
    _, version, json_len = _HEADER.unpack_from(raw)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    body = raw[_HEADER.size:]
    if len(body) < json_len:
        raise ValueError("truncated checkpoint")
    doc = json.loads(body[:json_len].decode())

    arrays = {}
    offset = json_len
    for entry in doc["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(body):
            raise ValueError("truncated checkpoint")
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += nbytes
    blobs = {}
    for entry in doc["blobs"]:
        nbytes = entry["nbytes"]
        if offset + nbytes > len(body):
            raise ValueError("truncated checkpoint")
        blobs[entry["name"]] = bytes(body[offset:offset + nbytes])
        offset += nbytes
    if offset != len(body):
        raise ValueError("trailing bytes after checkpoint payload")

    sac = SacConfig(**{**doc["sac"],
                       "hidden_dims": tuple(doc["sac"]["hidden_dims"])})
    maze = parse_maze_config(doc["maze"])
    tr = doc["trainer"]
    trainer = Trainer(sac, maze, noise_scale=tr["noise_scale"],
                      seed=tr["seed"], eval_interval=tr["eval_interval"],
                      eval_episodes=tr["eval_episodes"])
    trainer.env_step = tr["env_step"]
    trainer.grad_steps = tr["grad_steps"]
    trainer.eval_count = tr["eval_count"]

    ag = trainer.agent
    for i in range(len(ag.critics)):
        ag.critics[i].theta[:] = arrays[f"critic{i}"]
        ag.targets[i].theta[:] = arrays[f"target{i}"]
        ag.critic_opts[i].m[:] = arrays[f"critic_opt{i}.m"]
        ag.critic_opts[i].v[:] = arrays[f"critic_opt{i}.v"]
        ag.critic_opts[i].t = doc["agent"]["critic_opt_t"][i]
    ag.actor.theta[:] = arrays["actor"]
    ag.actor_opt.m[:] = arrays["actor_opt.m"]
    ag.actor_opt.v[:] = arrays["actor_opt.v"]
    ag.actor_opt.t = doc["agent"]["actor_opt_t"]
    ag.log_alpha = doc["agent"]["log_alpha"]
    ag.alpha_m = doc["agent"]["alpha_m"]
    ag.alpha_v = doc["agent"]["alpha_v"]
    ag.alpha_t = doc["agent"]["alpha_t"]
    ag.target_entropy = doc["agent"]["target_entropy"]
    if "critic_masks" in blobs:
        ag.critic_masks = MaskSet.from_bytes(blobs["critic_masks"])
    if "actor_masks" in blobs:
        ag.actor_masks = MaskSet.from_bytes(blobs["actor_masks"])

    _set_rng_state(trainer.env.rng, doc["rngs"]["env"])
    _set_rng_state(ag.subnet_rng, doc["rngs"]["subnet"])
    _set_rng_state(ag.batch_rng, doc["rngs"]["batch"])
    _set_rng_state(ag.action_rng, doc["rngs"]["action"])

    buf = trainer.buffer
    buf.size = doc["buffer"]["size"]
    buf.pos = doc["buffer"]["pos"]
    buf.inserted = doc["buffer"]["inserted"]
    for name in ("s", "a", "r", "s_next", "done"):
        getattr(buf, name)[:buf.size] = arrays[f"buffer.{name}"]

    if doc["env_state"] is None:
        trainer.env.state = None
    else:
        es = doc["env_state"]
        trainer.env.state = EnvState(
            position=np.array(es["position"], dtype=np.float64),
            step_count=es["step_count"],
            noise=np.array(es["noise"], dtype=np.float64),
            finished=es["finished"])

    ep = doc["episode"]
    trainer._obs = arrays["obs"] if ep["active"] else None
    token = ep["subnet"]
    if token["kind"] == "none":
        trainer._ep_subnet = None
    elif token["kind"] == "int":
        trainer._ep_subnet = token["value"]
    else:
        trainer._ep_subnet = arrays["ep_subnet_mask"]
    trainer._ep_return = ep["return"]
    trainer._ep_positions = [tuple(p) for p in ep["positions"]]
    trainer.log = _log_from_doc(doc["log"])
    return trainer
