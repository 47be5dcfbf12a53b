"""
Benchmark harness: baselines, predicted and fitted IDM, ablations and reports

Every method is rolled out on the same episodes. A vehicle failing for any
method is dropped from every row so all rows aggregate the same vehicle set.
"""

from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional, Sequence

import pandas as pd

from app.config import Settings
from app.core.enums import CodeFeature, Method
from app.core.exceptions import DriveCodeException, EmptyStoreException
from app.core.models import EvalRecord, IdmGlobals, ReportRow, ReportTable, Scene
from app.services.code_predictor import KnnStore, vehicle_code
from app.services.estimation import fit_idm
from app.services.metrics import ade, fde
from app.services.rollout import ConstantVelocityController, Controller, IdmController, rollout
from app.services.scene_data import episode_window
from app.utils.artifacts import read_table, run_header, write_table
from app.utils.logger import setup_logger
from app.utils.parallel import parallel_map, shared

logger = setup_logger(__name__)

REPORT_COLUMNS = ("method", "n", "mean_ade", "se_ade", "mean_fde", "se_fde", "at_fault_collisions")
DEFAULT_FRAMES = (2, 4, 6, 10, 20)
DEFAULT_KS = (1, 2, 4, 8, 16, 32)


class Variant:
    """One row of a benchmark table: a method plus prediction overrides"""

    def __init__(
        self,
        key: str,
        method: Method,
        features: Optional[Sequence[CodeFeature]] = None,
        observe_frames: Optional[int] = None,
        k: Optional[int] = None,
    ):
        self.key = key
        self.method = method
        self.features = features
        self.observe_frames = observe_frames
        self.k = k


def _controller(variant: Variant, vehicle_id: int, episode, state: dict) -> Controller:
    config: Settings = state["config"]
    store: KnnStore = state["store"]
    globals_ = IdmGlobals(v0=episode.v0, phi=config.idm.phi)

    if variant.method is Method.CONSTVEL:
        return ConstantVelocityController()
    if variant.method is Method.IDM_AVERAGE:
        return IdmController(store.average_params(), globals_)
    if variant.method is Method.IDM_PREDICT:
        knn = config.knn
        features = list(variant.features) if variant.features is not None else knn.features
        code = vehicle_code(
            state["scene"],
            vehicle_id,
            variant.observe_frames or knn.observe_frames,
            knn.model_copy(update={"features": features}),
            config.ingest.headway_source,
        )
        params = store.predict_params(code, variant.k or knn.k, features)
        return IdmController(params, globals_)

    mean = store.average_params() if len(store) else None
    return IdmController(fit_idm(episode, config, population_mean=mean).params, globals_)


def _evaluate_vehicle(vehicle_id: int) -> tuple[int, list[EvalRecord], Optional[str]]:
    state = shared()
    config: Settings = state["config"]
    try:
        episode = episode_window(
            state["scene"], vehicle_id, config.metrics.horizon,
            headway_source=config.ingest.headway_source,
        )
        records = []
        for variant in state["variants"]:
            result = rollout(
                episode,
                _controller(variant, vehicle_id, episode, state),
                config.pursuit,
                config.rollout,
                config.dynamics.substeps,
            )
            model = result.model_trajectory
            truth = episode.truth.window(0, len(model))
            records.append(EvalRecord(
                vehicle_id=vehicle_id,
                method=variant.key,
                ade=ade(truth, model, config.metrics.ade_normalization),
                fde=fde(truth, model),
                collided_at_fault=result.at_fault,
            ))
    except EmptyStoreException:
        raise
    except DriveCodeException as e:
        return vehicle_id, [], e.message
    return vehicle_id, records, None


def build_report(records: list[EvalRecord], keys: Sequence[str]) -> ReportTable:
    """
    Aggregate records into rows ordered as keys

    Standard errors use the sample deviation; a single vehicle gets zero.
    """
    if not records:
        return ReportTable(rows=[
            ReportRow(method=key, n=0, mean_ade=float("nan"), se_ade=float("nan"),
                      mean_fde=float("nan"), se_fde=float("nan"), at_fault_collisions=0)
            for key in keys
        ])

    frame = pd.DataFrame([r.model_dump() for r in records])
    grouped = frame.groupby("method", sort=False)
    stats = grouped.agg(
        n=("vehicle_id", "size"),
        mean_ade=("ade", "mean"),
        se_ade=("ade", "sem"),
        mean_fde=("fde", "mean"),
        se_fde=("fde", "sem"),
        at_fault_collisions=("collided_at_fault", "sum"),
    ).fillna({"se_ade": 0.0, "se_fde": 0.0})

    rows = []
    for key in keys:
        if key not in stats.index:
            continue
        s = stats.loc[key]
        rows.append(ReportRow(
            method=key,
            n=int(s["n"]),
            mean_ade=float(s["mean_ade"]),
            se_ade=float(s["se_ade"]),
            mean_fde=float(s["mean_fde"]),
            se_fde=float(s["se_fde"]),
            at_fault_collisions=int(s["at_fault_collisions"]),
        ))
    return ReportTable(rows=rows)


def run_variants(
    store: KnnStore,
    scene: Scene,
    variants: list[Variant],
    config: Optional[Settings] = None,
    vehicle_ids: Optional[Iterable[int]] = None,
) -> tuple[ReportTable, list[EvalRecord]]:
    """
    Roll out every variant on every eligible vehicle

    Returns:
        Report rows in variant order and per-vehicle records ordered by vehicle id
    """
    config = config or Settings()
    needs_store = any(v.method is not Method.CONSTVEL for v in variants)
    if needs_store and not len(store):
        raise EmptyStoreException()

    ids = sorted(vehicle_ids if vehicle_ids is not None else scene.vehicle_ids)
    logger.info(
        f"Evaluating {len(ids)} vehicles",
        extra={"variants": [v.key for v in variants], "workers": config.workers},
    )
    payload = {"scene": scene, "config": config, "store": store, "variants": variants}
    results = parallel_map(_evaluate_vehicle, ids, config.workers, payload)

    records: list[EvalRecord] = []
    skipped = 0
    for vehicle_id, vehicle_records, reason in results:
        if reason is not None:
            skipped += 1
            logger.warning(f"Excluding vehicle {vehicle_id} from every method: {reason}")
            continue
        records.extend(vehicle_records)
    if skipped:
        logger.info(f"Excluded {skipped} vehicles")
    return build_report(records, [v.key for v in variants]), records


def run_benchmark(
    store: KnnStore,
    scene: Scene,
    config: Optional[Settings] = None,
    methods: Optional[Iterable[Method]] = None,
    vehicle_ids: Optional[Iterable[int]] = None,
) -> tuple[ReportTable, list[EvalRecord]]:
    """Baselines, predicted IDM and oracle IDM in report row order"""
    chosen = set(methods) if methods is not None else set(Method)
    variants = [Variant(m.value, m) for m in Method if m in chosen]
    return run_variants(store, scene, variants, config, vehicle_ids)


def _feature_key(features: Sequence[CodeFeature]) -> str:
    return f"{Method.IDM_PREDICT.value}[{','.join(f.value for f in features)}]"


def ablation_driving_code(
    store: KnnStore,
    scene: Scene,
    config: Optional[Settings] = None,
    vehicle_ids: Optional[Iterable[int]] = None,
) -> tuple[ReportTable, list[EvalRecord]]:
    """Predicted IDM for each of the seven non-empty feature subsets"""
    variants = [
        Variant(_feature_key(subset), Method.IDM_PREDICT, features=list(subset))
        for size in range(1, len(CodeFeature) + 1)
        for subset in combinations(list(CodeFeature), size)
    ]
    return run_variants(store, scene, variants, config, vehicle_ids)


def ablation_frames(
    store: KnnStore,
    scene: Scene,
    config: Optional[Settings] = None,
    frames: Sequence[int] = DEFAULT_FRAMES,
    vehicle_ids: Optional[Iterable[int]] = None,
) -> tuple[ReportTable, list[EvalRecord]]:
    """Predicted IDM for several observation window lengths"""
    variants = [
        Variant(f"{Method.IDM_PREDICT.value}[frames={n}]", Method.IDM_PREDICT, observe_frames=n)
        for n in frames
    ]
    return run_variants(store, scene, variants, config, vehicle_ids)


def ablation_neighbors(
    store: KnnStore,
    scene: Scene,
    config: Optional[Settings] = None,
    ks: Sequence[int] = DEFAULT_KS,
    vehicle_ids: Optional[Iterable[int]] = None,
) -> tuple[ReportTable, list[EvalRecord]]:
    """Predicted IDM for several neighbor counts; counts above the store size are dropped"""
    usable = [k for k in ks if k <= len(store)]
    if len(usable) < len(ks):
        logger.warning(
            "Dropping neighbor counts larger than the store",
            extra={"store_size": len(store), "dropped": [k for k in ks if k > len(store)]},
        )
    variants = [
        Variant(f"{Method.IDM_PREDICT.value}[k={k}]", Method.IDM_PREDICT, k=k) for k in usable
    ]
    return run_variants(store, scene, variants, config, vehicle_ids)


def report_frame(table: ReportTable) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in table.rows], columns=list(REPORT_COLUMNS))


def _label(key: str) -> str:
    try:
        return Method(key).label
    except ValueError:
        return key


def render_markdown(table: ReportTable) -> str:
    """Aligned markdown table with mean ± standard error cells"""
    lines = [
        "| Method | n | ADE (m) | FDE (m) | At-fault collisions |",
        "|:--|--:|--:|--:|--:|",
    ]
    for row in table.rows:
        lines.append(
            f"| {_label(row.method)} | {row.n} | {row.mean_ade:.2f} ± {row.se_ade:.2f} "
            f"| {row.mean_fde:.2f} ± {row.se_fde:.2f} | {row.at_fault_collisions} |"
        )
    return "\n".join(lines) + "\n"


def records_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.vehicles.csv")


def save_report(
    table: ReportTable,
    records: list[EvalRecord],
    path: Path,
    config: Optional[Settings] = None,
) -> Path:
    """Write the report table and the per-vehicle records next to it"""
    header = run_header(config)
    write_table(path, "report", report_frame(table), header)
    per_vehicle = pd.DataFrame(
        [r.model_dump() for r in records],
        columns=["vehicle_id", "method", "ade", "fde", "collided_at_fault"],
    )
    write_table(records_path(path), "records", per_vehicle, header)
    return Path(path)


def load_report(path: Path) -> ReportTable:
    _, frame = read_table(path, "report")
    frame["method"] = frame["method"].astype(str)
    return ReportTable(rows=[ReportRow(**row) for row in frame.to_dict(orient="records")])
