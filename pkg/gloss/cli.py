"""
Interface de linha de comando

Comandos: gen-blobs, train, sweep, lpa-verify, gradcheck, dump-graph, compare.
Códigos de saída: 0 sucesso, 1 falha de execução, 2 configuração inválida.
"""

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gloss.exceptions import ConfigError, GLossError
from gloss.generators.formatter import ReportFormatter
from gloss.parsers.dataset import FORMATS, Dataset, load_dataset, make_blobs, save_dataset, split
from gloss.processors.encoder import save_checkpoint
from gloss.training.config import TrainConfig
from gloss.training.experiments import compare, sweep
from gloss.training.trainer import GLossTrainer
from gloss.utils.config_loader import ConfigLoader
from gloss.utils.logging_helper import RunLogger
from gloss.validators.gradcheck import random_composite_check
from gloss.validators.lpa_check import verify_lpa

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

SUMMARY_COLUMNS = ['loss', 'mode', 'accuracy_mean', 'macro_f1_mean', 'macro_silhouette_mean',
                   'total_time_mean', 'avg_epoch_time_mean', 'early_stop_epoch_mean']
SIGNIFICANCE_COLUMNS = ['reference', 'baseline', 'metric', 'mu_reference', 'mu_baseline', 'delta_mu',
                        'p_value', 'significance']


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"lista de números inválida: {text}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"lista de inteiros inválida: {text}")


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(',') if v.strip()]


def _add_run_options(p: argparse.ArgumentParser, data: bool = True):
    p.add_argument('--config', help='arquivo .cfg (caminho ou nome em configs/)')
    p.add_argument('--set', dest='overrides', action='append', default=[], metavar='CHAVE=VALOR',
                   help='sobrescreve uma chave da configuração (repetível)')
    if data:
        p.add_argument('--data', help='dataset único, dividido em treino/validação/teste')
        p.add_argument('--train', help='arquivo de treino (modo três arquivos)')
        p.add_argument('--val', help='arquivo de validação (modo três arquivos)')
        p.add_argument('--test', help='arquivo de teste (modo três arquivos)')
        p.add_argument('--format', choices=FORMATS, help='formato dos arquivos (padrão: pela extensão)')
        p.add_argument('--train-frac', type=float, default=0.6)
        p.add_argument('--val-frac', type=float, default=0.2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='gloss', description='Treino guiado por grafo (G-Loss) e verificações')
    parser.add_argument('--seed', type=int, help='semente (sobrescreve a configuração)')
    parser.add_argument('--out', help='diretório de saída')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-blobs', help='gera clusters gaussianos sintéticos')
    p.add_argument('--n', type=int, default=600)
    p.add_argument('--d', type=int, default=20)
    p.add_argument('--classes', type=int, default=3)
    p.add_argument('--sep', type=float, default=5.0, help='distância entre centros')
    p.add_argument('--name', default='blobs')
    p.add_argument('--format', choices=FORMATS, default='binary')
    p.add_argument('--split', action='store_true', help='grava também treino/validação/teste')

    p = sub.add_parser('train', help='treina e avalia uma configuração')
    _add_run_options(p)

    p = sub.add_parser('sweep', help='varredura de gamma, multiplicador de sigma e lambda')
    _add_run_options(p)
    p.add_argument('--gammas', type=_float_list)
    p.add_argument('--sigma-multipliers', type=_float_list)
    p.add_argument('--lambdas', type=_float_list)
    p.add_argument('--seeds', type=_int_list)
    p.add_argument('--workers', type=int)

    p = sub.add_parser('compare', help='compara perdas sob as mesmas sementes')
    _add_run_options(p)
    p.add_argument('--losses', type=_str_list)
    p.add_argument('--mode', choices=('integrated', 'standalone'))
    p.add_argument('--reference', default='gloss_o')
    p.add_argument('--seeds', type=_int_list)
    p.add_argument('--workers', type=int)

    p = sub.add_parser('lpa-verify', help='forma fechada x Neumann x Monte Carlo')
    p.add_argument('--instances', type=int, default=50)
    p.add_argument('--max-batch', type=int, default=32)
    p.add_argument('--mc-instances', type=int, default=10)
    p.add_argument('--mc-batch', type=int, default=8)
    p.add_argument('--walks', type=int, default=100_000)

    p = sub.add_parser('gradcheck', help='gradiente da perda composta x diferenças finitas')
    p.add_argument('--configs', type=int, default=20, help='configurações aleatórias')
    p.add_argument('--batch', type=int, default=8)
    p.add_argument('--dim', type=int, default=6)
    p.add_argument('--classes', type=int, default=3)
    p.add_argument('--eps', type=float, default=1e-5)
    p.add_argument('--tol', type=float, default=1e-4)

    p = sub.add_parser('dump-graph', help='grava W, embeddings e rótulos de um batch')
    _add_run_options(p)
    p.add_argument('--epoch', type=int, default=0, help='época após a qual o grafo é gravado (0 = inicial)')
    p.add_argument('--batch-index', type=int, default=0)
    return parser


def _default_settings():
    from config import config as app_configs
    return app_configs[os.environ.get('GLOSS_ENV', 'default')]


class CommandRunner:
    """Executa um comando já interpretado"""

    def __init__(self, args: argparse.Namespace, settings: Any):
        self.args = args
        self.settings = settings
        self.out_dir = Path(args.out or settings.OUTPUT_FOLDER)
        self.formatter = ReportFormatter()
        self.loader = ConfigLoader(getattr(settings, 'CONFIGS_FOLDER', None))
        self.log = RunLogger(args.command)

    # -- apoio -------------------------------------------------------------

    def _seed(self) -> int:
        return self.args.seed if self.args.seed is not None else self.settings.SEED

    def load_config(self) -> TrainConfig:
        overrides = self.loader.parse_overrides(self.args.overrides)
        base = TrainConfig(seed=self._seed())
        config = self.loader.load(self.args.config, overrides, base=base)
        if self.args.seed is not None:
            config = TrainConfig.from_dict({'seed': self.args.seed}, base=config)
        return config.check()

    def load_data(self, seed: int) -> Tuple[Dataset, Dataset, Dataset]:
        args = self.args
        fmt = args.format
        triple = (args.train, args.val, args.test)
        if any(triple):
            if not all(triple):
                raise ConfigError("modo três arquivos exige --train, --val e --test", 'data')
            self.log.step_start('data', f"carregando {args.train}, {args.val}, {args.test}")
            return tuple(load_dataset(p, fmt) for p in triple)
        if not args.data:
            raise ConfigError("informe --data ou --train/--val/--test", 'data')
        self.log.step_start('data', f"carregando {args.data}")
        ds = load_dataset(args.data, fmt)
        parts = split(ds, args.train_frac, args.val_frac, seed=seed)
        self.log.step_complete('data', "split estratificado", {'sizes': [p.n for p in parts]})
        return parts

    def _workers(self) -> int:
        return self.args.workers if self.args.workers else self.settings.WORKERS

    def finish(self):
        self.log.flush(self.out_dir / 'run_log.jsonl')

    # -- comandos ----------------------------------------------------------

    def gen_blobs(self) -> int:
        args = self.args
        ds = make_blobs(args.n, args.d, args.classes, args.sep, seed=self._seed())
        suffix = '.csv' if args.format == 'csv' else '.glds'
        path = self.out_dir / f"{args.name}{suffix}"
        save_dataset(ds, path, args.format)
        written = [path]
        if args.split:
            for part, name in zip(split(ds, 0.6, 0.2, seed=self._seed()), ('train', 'val', 'test')):
                part_path = self.out_dir / f"{args.name}_{name}{suffix}"
                save_dataset(part, part_path, args.format)
                written.append(part_path)
        counts = np.bincount(ds.labels, minlength=ds.num_classes).tolist()
        self.log.step_complete('data', f"{ds.n} linhas geradas", {'files': written, 'per_class': counts})
        print(f"{ds.n} linhas, {ds.num_classes} classes {counts} -> {', '.join(str(p) for p in written)}")
        return EXIT_OK

    def train(self) -> int:
        config = self.load_config()
        train, val, test = self.load_data(config.seed)
        trainer = GLossTrainer(config, self.log)
        report = trainer.fit(train, val, test)

        paths = self.formatter.write_report(report, self.out_dir)
        save_checkpoint(self.out_dir / 'checkpoint.glck', trainer.params, trainer.head)
        row = {'loss': config.loss, 'mode': config.mode, **report.test.to_dict(),
               'total_time': report.total_time, 'avg_epoch_time': report.avg_epoch_time,
               'early_stop_epoch': report.early_stop_epoch}
        print(self.formatter.format_table([row]))
        self.log.step_complete('export', "artefatos gravados", {k: str(v) for k, v in paths.items()})
        return EXIT_OK

    def sweep(self) -> int:
        args = self.args
        config = self.load_config()
        train, val, test = self.load_data(config.seed)
        result = sweep(config, train, val, test, gammas=args.gammas, sigma_multipliers=args.sigma_multipliers,
                       lambdas=args.lambdas, seeds=args.seeds, workers=self._workers(), run_logger=self.log)
        self.formatter.write_csv(result.rows, self.out_dir / 'sweep.csv')
        self.formatter.write_csv([r.to_row() for r in result.runs], self.out_dir / 'sweep_runs.csv')
        self.formatter.write_csv(result.tornado, self.out_dir / 'tornado.csv',
                                 columns=['parameter', 'best_value', 'worst_value', 'best_macro_f1',
                                          'worst_macro_f1', 'max_deviation'])
        print(self.formatter.format_table(result.rows, ['gamma', 'sigma_multiplier', 'lambda', 'accuracy_mean',
                                                        'macro_f1_mean', 'deviation_from_best', 'runs_failed']))
        return EXIT_OK

    def compare(self) -> int:
        args = self.args
        config = self.load_config()
        train, val, test = self.load_data(config.seed)
        result = compare(config, train, val, test, losses=args.losses, seeds=args.seeds, mode=args.mode,
                         reference=args.reference, workers=self._workers(), run_logger=self.log)
        self.formatter.write_csv(result.rows, self.out_dir / 'compare.csv')
        self.formatter.write_csv([r.to_row() for r in result.runs], self.out_dir / 'compare_runs.csv')
        self.formatter.write_csv(result.significance, self.out_dir / 'significance.csv',
                                 columns=SIGNIFICANCE_COLUMNS + ['t_stat', 'n'])
        print(self.formatter.format_table(result.rows, SUMMARY_COLUMNS))
        if result.significance:
            print()
            print(self.formatter.format_table(result.significance, SIGNIFICANCE_COLUMNS))
        return EXIT_OK

    def lpa_verify(self) -> int:
        args = self.args
        report = verify_lpa(instances=args.instances, max_batch=args.max_batch, mc_instances=args.mc_instances,
                            mc_batch=args.mc_batch, walks=args.walks, seed=self._seed())
        self.formatter.write_json(report.to_dict(), self.out_dir / 'lpa_verify.json')
        print(f"forma fechada x Neumann: desvio máximo {report.max_neumann_dev:.3e}")
        print(f"forma fechada x Monte Carlo: desvio máximo {report.max_monte_carlo_dev:.3e}")
        print(f"rho(T_uu) máximo: {report.rho_max:.6f}  solves singulares: {report.solve_failures}")
        return EXIT_OK if report.passed() else EXIT_FAILURE

    def gradcheck(self) -> int:
        args = self.args
        rows = []
        for k in range(args.configs):
            report = random_composite_check(seed=self._seed() + k, batch_size=args.batch, input_dim=args.dim,
                                            num_classes=args.classes, eps=args.eps, tol=args.tol)
            rows.append({'config': k, **report.to_dict()})
        self.formatter.write_json({'checks': rows}, self.out_dir / 'gradcheck.json')
        passed = all(r['pass'] for r in rows)
        worst = max(r['max_rel_err'] for r in rows) if rows else 0.0
        print(f"{len(rows)} configurações, erro relativo máximo {worst:.3e}: {'PASSOU' if passed else 'FALHOU'}")
        return EXIT_OK if passed else EXIT_FAILURE

    def dump_graph(self) -> int:
        args = self.args
        if args.epoch < 0:
            raise ConfigError(f"--epoch precisa ser >= 0, recebeu {args.epoch}", 'epoch')
        config = self.load_config()
        train, val, test = self.load_data(config.seed)
        snapshots: Dict[int, Dict[str, Any]] = {}

        if args.epoch == 0:
            trainer = GLossTrainer(config, self.log)
            trainer.initialize(train.input_dim, train.num_classes)
            snapshots[0] = trainer.graph_snapshot(train, args.batch_index)
        else:
            config = TrainConfig.from_dict({'max_epochs': args.epoch, 'patience': args.epoch}, base=config)

            def capture(epoch: int, trainer: GLossTrainer):
                if epoch == args.epoch:
                    snapshots[epoch] = trainer.graph_snapshot(train, args.batch_index)

            GLossTrainer(config, self.log, on_epoch_end=capture).fit(train, val, test)

        snap = snapshots[args.epoch]
        tag = f"epoch{args.epoch}"
        self.formatter.write_matrix(snap['W'], self.out_dir / f'graph_W_{tag}.csv')
        self.formatter.write_matrix(snap['embeddings'], self.out_dir / f'embeddings_{tag}.csv')
        self.formatter.write_csv([{'index': int(i), 'label': int(l)} for i, l in zip(snap['indices'], snap['labels'])],
                                 self.out_dir / f'labels_{tag}.csv')
        print(f"grafo do batch {args.batch_index} (B={snap['W'].shape[0]}, sigma={snap['sigma']:.4g}) "
              f"gravado em {self.out_dir}")
        return EXIT_OK

    def run(self) -> int:
        handlers = {
            'gen-blobs': self.gen_blobs,
            'train': self.train,
            'sweep': self.sweep,
            'compare': self.compare,
            'lpa-verify': self.lpa_verify,
            'gradcheck': self.gradcheck,
            'dump-graph': self.dump_graph,
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / 'run_log.jsonl').unlink(missing_ok=True)
        return handlers[self.args.command]()


def main(argv: Optional[Sequence[str]] = None, settings: Any = None) -> int:
    args = build_parser().parse_args(argv)
    settings = settings or _default_settings()
    out_dir = args.out or settings.OUTPUT_FOLDER
    settings.init_app(out_dir)
    logging.captureWarnings(True)
    warnings.simplefilter('default')

    runner = CommandRunner(args, settings)
    try:
        return runner.run()
    except ConfigError as e:
        runner.log.step_error(args.command, "configuração inválida", e)
        key = f" (chave '{e.key}')" if e.key else ''
        print(f"erro de configuração{key}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (GLossError, OSError, ValueError) as e:
        runner.log.step_error(args.command, "falha na execução", e)
        print(f"erro: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        runner.finish()
