"""
Commands Package
Exports all subcommands
"""
from orbitsym.commands import check, evaluate, gen_data, train

COMMANDS = {
    "gen-data": gen_data,
    "train": train,
    "eval": evaluate,
    "check": check,
}

__all__ = ['COMMANDS', 'check', 'evaluate', 'gen_data', 'train']
