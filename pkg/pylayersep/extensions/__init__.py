__all__ = [
    'common',
    'init_flow',
    'synth',
    'metrics',
    'refocus'
    ]
