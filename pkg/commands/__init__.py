"""
commands package — one module per command group.

Each sub-module exports ``register(subparsers)`` adding its argparse parsers
(each sets ``command`` to a dotted name) and a HANDLERS dict mapping that name
to ``handler(args) -> exit code``. This __init__ merges them.
"""

from commands import (
    phantom_cmd,
    simulate_cmd,
    preprocess_cmd,
    translate_cmd,
    evaluate_cmd,
    run_cmd,
    system_cmd,
)

GROUPS = (
    phantom_cmd,
    simulate_cmd,
    preprocess_cmd,
    translate_cmd,
    evaluate_cmd,
    run_cmd,
    system_cmd,
)

COMMAND_HANDLERS = {
    **phantom_cmd.HANDLERS,
    **simulate_cmd.HANDLERS,
    **preprocess_cmd.HANDLERS,
    **translate_cmd.HANDLERS,
    **evaluate_cmd.HANDLERS,
    **run_cmd.HANDLERS,
    **system_cmd.HANDLERS,
}
