import io
import json

from django.test import SimpleTestCase

from spatial.exceptions import SchemaError
from spatial.services.dataset import DatasetRecord, read_jsonl, summarize, write_jsonl
from spatial.services.scenegen import GenConfig, generate_dataset


def sample_records():
    config = GenConfig(n_entities=5, n_blocks=1, k_target=2, question_mix=0.5, n_scenes=3, seed=4)
    return generate_dataset(config)


class JsonlTests(SimpleTestCase):
    def test_write_then_read(self):
        records = sample_records()
        buffer = io.StringIO()
        self.assertEqual(write_jsonl(records, buffer), len(records))
        lines = buffer.getvalue().splitlines()
        self.assertEqual(len(lines), len(records))
        again = read_jsonl(io.StringIO(buffer.getvalue()))
        self.assertEqual([r.to_json() for r in again], [r.to_json() for r in records])

    def test_record_carries_story(self):
        data = sample_records()[0].to_json()
        self.assertEqual(len(data['story']), len(data['scene']['facts']))
        self.assertIn('constraints', data)

    def test_blank_lines_are_skipped(self):
        records = sample_records()[:2]
        buffer = io.StringIO()
        write_jsonl(records, buffer)
        self.assertEqual(len(read_jsonl(io.StringIO('\n' + buffer.getvalue() + '\n\n'))), 2)

    def test_invalid_json_line(self):
        buffer = io.StringIO()
        write_jsonl(sample_records()[:1], buffer)
        with self.assertRaisesMessage(SchemaError, 'línea 2'):
            read_jsonl(io.StringIO(buffer.getvalue() + '{roto\n'))

    def test_missing_depth(self):
        data = sample_records()[0].to_json()
        del data['k']
        with self.assertRaises(SchemaError):
            DatasetRecord.from_json(data)

    def test_unknown_key(self):
        data = dict(sample_records()[0].to_json(), extra=1)
        with self.assertRaises(SchemaError):
            DatasetRecord.from_json(data)

    def test_gold_must_match_question_type(self):
        record = sample_records()[0]
        data = json.loads(json.dumps(record.to_json()))
        data['gold'] = ['left'] if record.question.qtype.value == 'YN' else 'yes'
        with self.assertRaises(SchemaError):
            DatasetRecord.from_json(data)


class SummaryTests(SimpleTestCase):
    def test_counts_add_up(self):
        records = sample_records()
        stats = summarize(records)
        self.assertEqual(stats['records'], len(records))
        self.assertEqual(sum(stats['question_type'].values()), len(records))
        self.assertEqual(sum(stats['gold'].values()), len(records))
        self.assertEqual(sum(stats['depth'].values()), len(records))
        self.assertEqual(sum(stats['templates'].values()), sum(len(r.constraints) for r in records))

    def test_empty(self):
        self.assertEqual(summarize([]), {
            'records': 0, 'question_type': {}, 'gold': {}, 'depth': {}, 'templates': {}, 'depth_unreachable': 0,
        })
