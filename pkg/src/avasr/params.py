"""Named, group-tagged parameter storage.

Every model tensor lives in a ParameterTree under a unique name and exactly
one group tag.  Groups drive the curriculum: the trainer freezes everything
outside the selected groups, and freeze means the optimizer never touches
the bytes.
"""

from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from avasr.autodiff import Tensor
from avasr.errors import ConfigError, ShapeError

GROUP_BACKBONE = "backbone"
GROUP_ADAPTER = "adapter-phi"
GROUP_PROJECTOR = "projector-theta"
GROUP_DECODER = "decoder"

GROUPS = (GROUP_BACKBONE, GROUP_ADAPTER, GROUP_PROJECTOR, GROUP_DECODER)


class ParameterTree:
    """Ordered name -> Tensor map with group tags."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._groups: dict[str, str] = {}

    def add(self, name: str, data: np.ndarray, group: str) -> Tensor:
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter name {name!r}")
        if group not in GROUPS:
            raise ConfigError(
                f"parameter {name!r} has unknown group {group!r}; "
                f"known groups: {GROUPS}")
        t = Tensor(np.asarray(data, dtype=np.float64), name=name)
        self._tensors[name] = t
        self._groups[name] = group
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def group_of(self, name: str) -> str:
        return self._groups[name]

    def group_names(self, group: str) -> list[str]:
        if group not in GROUPS:
            raise ConfigError(f"unknown group {group!r}")
        return [n for n, g in self._groups.items() if g == group]

    def set_trainable_groups(self, groups: set[str]) -> list[str]:
        """Unfreeze exactly the given groups; freeze the rest.

        Returns the names of the now-trainable tensors in tree order.
        """
        unknown = groups - set(GROUPS)
        if unknown:
            raise ConfigError(f"unknown groups {sorted(unknown)}")
        selected = []
        for name, t in self._tensors.items():
            if self._groups[name] in groups:
                t.unfreeze(requires_grad=True)
                selected.append(name)
            else:
                t.freeze()
        return selected

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        """Overwrite tensor data in place; shapes must match exactly."""
        for name, arr in values.items():
            if name not in self._tensors:
                raise ConfigError(f"unknown parameter {name!r} in values")
            t = self._tensors[name]
            if t.data.shape != arr.shape:
                raise ShapeError(
                    f"parameter {name!r}: stored shape {arr.shape} != "
                    f"model shape {t.data.shape}")
            t.data = np.asarray(arr, dtype=np.float64).copy()
        missing = set(self._tensors) - set(values)
        if missing:
            raise ConfigError(
                f"values missing parameters: {sorted(missing)[:3]}...")

    def byte_digest(self, names: list[str] | None = None) -> str:
        """SHA-256 over name + raw data bytes, in tree order."""
        h = hashlib.sha256()
        for name, t in self._tensors.items():
            if names is not None and name not in names:
                continue
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def total_params(self, group: str | None = None) -> int:
        return sum(t.size for n, t in self._tensors.items()
                   if group is None or self._groups[n] == group)
