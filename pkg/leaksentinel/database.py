from sqlalchemy import create_engine, Column, Integer, String, DateTime, Float
from sqlalchemy.orm import declarative_base, sessionmaker
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Dict, Any
import json
import logging

logger = logging.getLogger(__name__)

Base = declarative_base()


class RunHistory(Base):
    __tablename__ = 'run_history'

    id = Column(Integer, primary_key=True)
    timestamp = Column(DateTime, default=datetime.now)
    command = Column(String, nullable=False)  # 'run', 'sweep'
    scenario = Column(String)  # scenario name or sweep kind

    # Configuration
    seed = Column(String)  # decimal text: seeds span the full unsigned 64-bit range
    n = Column(Integer)
    tau_s = Column(Integer)
    t_alarm = Column(Integer)
    train_size = Column(Integer)
    duration_s = Column(Float)

    # Outcome
    verdict = Column(String)  # ALARM, NOISE, QUIET or a sweep summary
    first_trigger_s = Column(Float)
    alarms = Column(Integer, default=0)
    avg_power_uw = Column(Float)
    output_dir = Column(String)

    # Status
    status = Column(String, default='completed')  # 'completed', 'failed'
    notes = Column(String)


class Database:
    def __init__(self, db_name: str | Path | None = None):
        if db_name is None:
            from .config import Settings
            db_name = Settings().db_path
        db_path = Path(db_name).expanduser().resolve()
        db_path.parent.mkdir(parents=True, exist_ok=True)
        self.engine = create_engine(f'sqlite:///{db_path}')
        Base.metadata.create_all(self.engine)
        Session = sessionmaker(bind=self.engine)
        self.session = Session()

    def record_run(self, command: str, scenario: Optional[str] = None, **fields: Any) -> RunHistory:
        """Archive one CLI invocation"""
        if fields.get("seed") is not None:
            fields["seed"] = str(fields["seed"])
        entry = RunHistory(command=command, scenario=scenario, **fields)
        self.session.add(entry)
        self.session.commit()
        logger.debug("archived %s run #%d", command, entry.id)
        return entry

    def get_runs(self, limit: Optional[int] = None, command: Optional[str] = None) -> List[RunHistory]:
        query = self.session.query(RunHistory)
        if command:
            query = query.filter_by(command=command)
        query = query.order_by(RunHistory.timestamp.desc(), RunHistory.id.desc())
        if limit:
            query = query.limit(limit)
        return query.all()

    def get_stats(self) -> Dict[str, Any]:
        runs = self.get_runs()
        verdicts: Dict[str, int] = {}
        for run in runs:
            key = str(run.verdict)
            verdicts[key] = verdicts.get(key, 0) + 1
        return {
            "total_runs": len(runs),
            "failed_runs": sum(1 for r in runs if r.status == 'failed'),
            "verdicts": verdicts,
        }

    def export_to_json(self) -> str:
        """Export the run archive to JSON format"""
        export_data = {
            "export_date": datetime.now().isoformat(),
            "version": "1.0",
            "runs": []
        }

        for run in reversed(self.get_runs()):
            export_data["runs"].append({
                "id": run.id,
                "timestamp": run.timestamp.isoformat(),
                "command": run.command,
                "scenario": run.scenario,
                "seed": None if run.seed is None else int(run.seed),
                "n": run.n,
                "tau_s": run.tau_s,
                "t_alarm": run.t_alarm,
                "train_size": run.train_size,
                "duration_s": run.duration_s,
                "verdict": run.verdict,
                "first_trigger_s": run.first_trigger_s,
                "alarms": run.alarms,
                "avg_power_uw": run.avg_power_uw,
                "output_dir": run.output_dir,
                "status": run.status,
                "notes": run.notes,
            })

        return json.dumps(export_data, indent=2, ensure_ascii=False)

    def close(self) -> None:
        self.session.close()
        self.engine.dispose()
