"""
Командная строка: run | sweep | selftest | serve

Коды выхода: 0 - успех, 2 - ошибка конфигурации, 3 - численная ошибка.
"""
import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from api.schemas import RunConfig, SweepConfig
from ir_response.common import NumericalError
from services.file_service import FileService

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parse_phase_point(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ValueError(f"--dump-trajectory ожидает числа через запятую, получено: {text}")


def _overrides(args) -> dict:
    update = {}
    if args.workers is not None:
        update["workers"] = args.workers
    if args.seed_override is not None:
        update["seed"] = args.seed_override
    return update


def _open_db(args):
    if args.no_db:
        return None
    from database.models import SessionLocal, init_db
    init_db()
    return SessionLocal()


def cmd_run(args) -> int:
    from services.run_service import RunService

    raw = FileService.load_config(args.config)
    raw.update(_overrides(args))
    config = RunConfig.model_validate(raw)

    if args.dump_trajectory:
        path = RunService.dump_trajectory(config, _parse_phase_point(args.dump_trajectory), args.out)
        print(f"Траектория записана в {path}")
        return EXIT_OK

    db = _open_db(args)
    try:
        record, _, run_id = RunService.run(config, db, args.out)
    finally:
        if db is not None:
            db.close()
    print(f"{record.method}: {record.csv_path} (запись {run_id}, {record.wall_clock:.1f} с)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from services.run_service import RunService

    raw = FileService.load_config(args.config)
    raw.setdefault("base", {}).update(_overrides(args))
    config = SweepConfig.model_validate(raw)
    db = _open_db(args)
    try:
        result = RunService.sweep(config, db, args.out)
    finally:
        if db is not None:
            db.close()
    failed = [c["label"] for c in result["cells"] if c["status"] != "completed"]
    print(f"Таблица сравнения: {result['table_path']}")
    if failed:
        print(f"Ячейки с ошибкой: {', '.join(failed)}")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_selftest(args) -> int:
    from services.selftest_service import SelftestService

    results = SelftestService.run_all()
    for r in results:
        print(f"{'OK  ' if r['passed'] else 'FAIL'} {r['name']}: {r['detail']}")
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_NUMERICAL


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("app:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ir-response", description="Линейный ИК-отклик: квантовый, ЛСК, HK, гибрид")
    parser.add_argument("--verbose", "-v", action="store_true", help="подробный журнал (DEBUG)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, handler in (("run", cmd_run), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON-файл конфигурации")
        p.add_argument("--out", default=None, help="каталог результатов")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--no-db", action="store_true", help="не регистрировать расчет в базе данных")
        p.set_defaults(handler=handler)
    sub.choices["run"].add_argument("--dump-trajectory", default=None, metavar="p1,..,pN,q1,..,qN")

    p = sub.add_parser("selftest")
    p.set_defaults(handler=cmd_selftest)

    p = sub.add_parser("serve")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="[%(module)-12s] %(message)s")
    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"Ошибка конфигурации:\n{e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Численная ошибка: {e}")
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        logger.error(f"Ошибка конфигурации: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
