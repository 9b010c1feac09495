import numpy as np

from spatial.exceptions import SchemaError
from spatial.management.commands._base import SpatialCommand
from spatial.services.inference import chain_from_json, derive
from spatial.services.render import (
    DEFAULT_BANK,
    PhraseBank,
    RenderFormat,
    StoryMode,
    render_chain,
    render_story,
)


class Command(SpatialCommand):
    help = 'Renderiza la historia de una escena o una Q-Chain como NL, CoT, LR o CoS.'

    def add_arguments(self, parser):
        self.add_scene_argument(parser, required=False)
        source = parser.add_mutually_exclusive_group()
        source.add_argument('--chain', help='Q-Chain JSON a renderizar.')
        source.add_argument('--target', help='Hecho objetivo: se deriva su cadena y se renderiza.')
        self.add_format_argument(parser, choices=tuple(f.value for f in RenderFormat), default='cot')
        parser.add_argument('--story-mode', choices=[m.value for m in StoryMode], default=StoryMode.STEP_BY_STEP.value,
                            help='Sin --chain/--target: cómo escribir la historia.')
        parser.add_argument('--phrases', help='Banco de frases JSON {relación: [frases]}.')
        self.add_seed_argument(parser)
        self.add_kb_argument(parser)
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        scene = self.load_scene(options['scene']) if options['scene'] else None
        if scene is None and not options['chain']:
            raise SchemaError('--scene es obligatorio salvo al renderizar una cadena con --chain')
        bank = PhraseBank.from_json(options['phrases']) if options['phrases'] else DEFAULT_BANK
        fmt = RenderFormat(options['fmt'])

        if options['chain']:
            chain = chain_from_json(self.read_json(options['chain'], 'cadena'))
        elif options['target']:
            target = self.parse_target(options['target'], scene)
            chain = derive(scene, target, self.load_kb(options))
            if chain is None:
                raise SchemaError(f"{target} no es derivable: no hay cadena que renderizar")
        else:
            # las variantes de frase sólo se sortean si se pide una semilla
            rng = np.random.default_rng(options['seed']) if options['seed'] is not None else None
            self.emit_text(render_story(scene, StoryMode(options['story_mode']), bank, rng), options)
            return
        # sin escena los nombres son los ids de la cadena
        self.emit_text(render_chain(chain, scene if scene is not None else (), fmt, bank), options)
