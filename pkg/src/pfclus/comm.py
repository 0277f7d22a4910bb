"""Message log for simulated client/server exchanges."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

SERVER = -1


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    kind: str
    round: int
    n_centers: int


@dataclass
class CommLog:
    """Append-only record of every simulated transmission.

    Client ids are ``0..Z-1``; the server is :data:`SERVER`. Only center
    vectors ever travel, never raw points.
    """

    messages: list[Message] = field(default_factory=list)

    def upload(self, client: int, centers, round: int = 0, kind: str = "local_centers") -> None:
        self.messages.append(Message(client, SERVER, kind, round, len(np.atleast_2d(centers))))

    def download(self, client: int, centers, round: int = 0, kind: str = "global_centers") -> None:
        self.messages.append(Message(SERVER, client, kind, round, len(np.atleast_2d(centers))))

    def uploads(self) -> Counter:
        return Counter(m.sender for m in self.messages if m.receiver == SERVER)

    def downloads(self) -> Counter:
        return Counter(m.receiver for m in self.messages if m.sender == SERVER)

    @property
    def rounds(self) -> int:
        return len({m.round for m in self.messages})

    def __len__(self) -> int:
        return len(self.messages)
