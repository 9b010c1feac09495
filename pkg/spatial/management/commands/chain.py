import logging

from spatial.management.commands._base import SpatialCommand
from spatial.services.inference import chain_depth, derive

logger = logging.getLogger(__name__)


class Command(SpatialCommand):
    help = 'Extrae la Q-Chain de un hecho objetivo.'

    def add_arguments(self, parser):
        self.add_scene_argument(parser)
        parser.add_argument('--target', required=True, help='Hecho objetivo "rel(subj,obj)".')
        self.add_kb_argument(parser)
        self.add_format_argument(parser)
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        scene = self.load_scene(options['scene'])
        target = self.parse_target(options['target'], scene)
        chain = derive(scene, target, self.load_kb(options))
        if chain is None:
            logger.warning("%s no es derivable: no hay cadena", target)

        if options['fmt'] == 'json':
            self.emit_json(chain.to_json() if chain is not None else None, options)
            return
        if chain is None:
            self.emit_text(f"{target}: no derivable", options)
            return
        lines = []
        for step in chain.steps:
            if step.rule_id is None:
                lines.append(f"{step.id}: {step.fact}  [dado]")
            else:
                lines.append(f"{step.id}: {step.fact}  <= {step.rule_id}({', '.join(step.premises)})")
        lines.append(f"profundidad {chain_depth(chain)}")
        self.emit_text('\n'.join(lines), options)
