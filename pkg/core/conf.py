from __future__ import annotations

from typing import Any

from django.conf import settings


def option(name: str, value: Any = None) -> Any:
    """Return ``value`` unless it is None, else the WORKBENCH default for ``name``."""
    if value is not None:
        return value
    return settings.WORKBENCH[name]
