"""Binary checkpoint container: a JSON header plus packed float32 tensors.

Layout: 8-byte little-endian unsigned header length, the UTF-8 JSON header,
then every tensor flattened row-major as little-endian float32 in manifest
order. The header records a sha256 of the payload so corruption is caught on
load, and save -> load -> save is byte-identical.
"""

import hashlib
import json
import struct

import numpy as np

from .nets import LayerSpec, Net
from .td3 import AgentPolicy

FORMAT_VERSION = 1
_NET_PARTS = ("W1", "b1", "W2", "b2")


def save_checkpoint(path, tensors, metadata=None):
    """tensors: list of (name, array, role) in the order they should pack."""
    manifest = []
    chunks = []
    for name, arr, role in tensors:
        arr = np.asarray(arr)
        manifest.append([name, list(arr.shape), role])
        chunks.append(arr.astype("<f4").tobytes(order="C"))
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "manifest": manifest,
        "metadata": metadata or {},
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(payload)


def load_checkpoint(path):
    """-> (tensors as saved, metadata). Verifies the payload hash."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise ValueError("truncated checkpoint: %s" % (path,))
    (hlen,) = struct.unpack("<Q", raw[:8])
    if len(raw) < 8 + hlen:
        raise ValueError("truncated checkpoint header: %s" % (path,))
    header = json.loads(raw[8:8 + hlen].decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError("unsupported checkpoint version %r"
                         % (header.get("format_version"),))
    payload = raw[8 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ValueError("checkpoint payload hash mismatch in %s" % (path,))
    n_expected = sum(int(np.prod(shape)) for _, shape, _ in header["manifest"])
    if 4 * n_expected != len(payload):
        raise ValueError("payload holds %d bytes, manifest expects %d"
                         % (len(payload), 4 * n_expected))
    tensors = []
    offset = 0
    for name, shape, role in header["manifest"]:
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
        tensors.append((name, arr.reshape(shape).astype(float), role))
        offset += 4 * n
    return tensors, header["metadata"]


def _spec_dict(spec):
    return {"in_dim": spec.in_dim, "hidden_dim": spec.hidden_dim,
            "out_dim": spec.out_dim, "head": spec.head,
            "split_tanh": spec.split_tanh}


def save_policies(path, policies, metadata=None):
    """Persist the actor and twin critics of each named policy.

    Target nets and optimizer state are not stored; loading rebuilds targets
    as copies, which is all a frozen policy needs.
    """
    tensors = []
    specs = {}
    for pname, pol in policies.items():
        for net_name, net, role in (("actor", pol.actor, "actor"),
                                    ("critic1", pol.critic1, "critic"),
                                    ("critic2", pol.critic2, "critic")):
            full = pname + "/" + net_name
            specs[full] = _spec_dict(net.spec)
            for part in _NET_PARTS:
                tensors.append((full + "/" + part, getattr(net, part), role))
    meta = dict(metadata or {})
    meta["net_specs"] = specs
    save_checkpoint(path, tensors, meta)


def load_policies(path):
    """-> (dict name -> AgentPolicy, metadata)."""
    tensors, meta = load_checkpoint(path)
    arrays = {name: arr for name, arr, _ in tensors}
    nets = {}
    for full, sd in meta.get("net_specs", {}).items():
        net = Net(LayerSpec(**sd))
        for part in _NET_PARTS:
            stored = arrays[full + "/" + part]
            target = getattr(net, part)
            if stored.shape != target.shape:
                raise ValueError("tensor %s has shape %r, spec wants %r"
                                 % (full + "/" + part, stored.shape,
                                    target.shape))
            target[:] = stored
        pname, net_name = full.rsplit("/", 1)
        nets.setdefault(pname, {})[net_name] = net
    policies = {}
    for pname, parts in nets.items():
        missing = {"actor", "critic1", "critic2"} - set(parts)
        if missing:
            raise ValueError("policy %r is missing %s" % (pname,
                                                          sorted(missing)))
        policies[pname] = AgentPolicy(parts["actor"], parts["critic1"],
                                      parts["critic2"])
    return policies, meta
