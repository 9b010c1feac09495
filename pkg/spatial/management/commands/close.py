from spatial.management.commands._base import SpatialCommand
from spatial.services.inference import close, find_conflicts


class Command(SpatialCommand):
    help = 'Calcula el cierre deductivo de una escena con su procedencia.'

    def add_arguments(self, parser):
        self.add_scene_argument(parser)
        self.add_kb_argument(parser)
        self.add_format_argument(parser)
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        scene = self.load_scene(options['scene'])
        closure = close(scene, self.load_kb(options))
        conflicts = find_conflicts(closure)

        if options['fmt'] == 'json':
            data = closure.to_json()
            data['conflicts'] = [[str(a), str(b)] for a, b in conflicts]
            self.emit_json(data, options)
            return

        lines = []
        for fact in sorted(closure.facts):
            d = closure.derivation(fact)
            if d is None:
                lines.append(f"{fact}  [base]")
            else:
                premises = ', '.join(str(p) for p in d.premises)
                lines.append(f"{fact}  <= {d.rule_id}({premises})  ronda {d.round}")
        for a, b in conflicts:
            lines.append(f"CONFLICTO {a} / {b}")
        lines.append(f"{len(closure)} hechos, {closure.rounds} rondas")
        self.emit_text('\n'.join(lines), options)
