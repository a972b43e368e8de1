"""Walking pattern generation with DCM model predictive control."""

try:
    from ._dcmwalk import *  # noqa: F401,F403
except ImportError:
    # In-tree build: the extension sits next to, not inside, this package.
    from _dcmwalk import *  # type: ignore  # noqa: F401,F403

MODES = ("cop-only", "cop+step", "cop+step+cmp", "cop+cmp")
