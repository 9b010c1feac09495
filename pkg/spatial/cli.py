"""
Punto de entrada programático del CLI: `run(argv)` ejecuta un subcomando
como lo haría `manage.py` y devuelve el código de salida en vez de terminar
el proceso.
"""
import os
import sys

SUBCOMMANDS = (
    'close', 'answer', 'chain', 'constraints', 'softeval', 'gen', 'render',
    'train', 'eval', 'selftest', 'pipeline', 'stats', 'ablation',
)


def run(argv=None) -> int:
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'spatial_project.settings')
    from django.core.management import ManagementUtility

    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in SUBCOMMANDS + ('help', '--help', '-h'):
        name = argv[0] if argv else ''
        sys.stderr.write(f"subcomando desconocido '{name}'. Disponibles: {', '.join(SUBCOMMANDS)}\n")
        return 2
    try:
        ManagementUtility(['spatial'] + argv).execute()
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
