"""Command-line client for the reconstruction service.

The CLI is a thin HTTP client: every subcommand (except ``serve``) builds a
request, sends it to the service and writes the response to local files.
By default the service runs in-process over an ASGI transport, so no server
needs to be started; ``--server URL`` switches to a remote instance.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every run prints its resolved configuration (including the seed) so any
output can be reproduced from the log line alone.
"""

from __future__ import annotations

import argparse
import base64
import csv
import sys
from pathlib import Path

import httpx

from .container import read_container, write_container

_USAGE_EXIT = 1
_DATA_EXIT = 2
_NUMERICAL_EXIT = 3


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=3600.0)
    # no server given: drive the ASGI app in-process through a sync portal
    import warnings

    with warnings.catch_warnings():
        # starlette warns about its own httpx->httpx2 migration; harmless here
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), base_url="http://msrd.internal")


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise CliError(f"transport failure talking to the service: {exc}", _DATA_EXIT)
    if response.status_code == 200:
        return response.json()
    try:
        body = response.json()
    except ValueError:
        body = {"detail": response.text}
    detail = body.get("detail", "service error")
    kind = body.get("kind", "data")
    if response.status_code == 422:
        raise CliError(f"invalid request: {detail}", _USAGE_EXIT)
    code = _NUMERICAL_EXIT if kind == "numerical" else _DATA_EXIT
    raise CliError(str(detail), code)


def _read_b64(path: str) -> str:
    arr = _read_array(path)
    from .service.models import encode_array

    return encode_array(arr)


def _read_array(path: str):
    p = Path(path)
    if not p.exists():
        raise CliError(f"input file not found: {path}", _DATA_EXIT)
    return read_container(p)


def _write_b64(payload: str, path: str, what: str) -> None:
    from .service.models import decode_array

    write_container(path, decode_array(payload))
    print(f"wrote {what}: {path}")


def _print_config(command: str, ns: argparse.Namespace) -> None:
    skip = {"func", "config", "server"}
    parts = [f"cmd={command}"]
    for key, value in sorted(vars(ns).items()):
        if key in skip or key == "command" or value is None:
            continue
        parts.append(f"{key}={value}")
    print("config:", " ".join(parts))


def _geometry_payload(ns: argparse.Namespace, size: int, scan_shape: tuple[int, int]) -> dict:
    return {
        "slice_spacing": ns.slice_spacing,
        "scan_rows": scan_shape[0],
        "scan_cols": scan_shape[1],
        "scan_step": ns.scan_step,
        "n_slices": ns.slices,
        "wavelength": ns.wavelength,
        "semi_angle": ns.semi_angle,
        "defocus": ns.defocus,
        "pixel_size": ns.pixel_size,
        "size": size,
    }


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_make_phantom(client: httpx.Client, ns: argparse.Namespace) -> int:
    if ns.kind == "mri":
        body = {"slices": ns.slices, "size": ns.size, "seed": ns.seed}
        out = _post(client, "/phantom/mri", body)
    else:
        body = {
            "slices": ns.slices,
            "size": ns.size,
            "pixel_size": ns.pixel_size,
            "lattice_constant": ns.lattice_constant,
            "amplitude": ns.amplitude,
            "width": ns.width,
        }
        out = _post(client, "/phantom/crystal", body)
    _write_b64(out["container"], ns.out, f"{ns.kind} phantom")
    return 0


def _cmd_make_mask(client: httpx.Client, ns: argparse.Namespace) -> int:
    body = {
        "kind": ns.kind,
        "size": ns.size,
        "acceleration": ns.accel,
        "center_fraction": ns.center_frac,
        "seed": ns.seed,
    }
    out = _post(client, "/mask", body)
    _write_b64(out["container"], ns.out, f"{ns.kind} mask")
    return 0


def _cmd_make_probe(client: httpx.Client, ns: argparse.Namespace) -> int:
    body = {
        "size": ns.size,
        "wavelength": ns.wavelength,
        "semi_angle": ns.semi_angle,
        "defocus": ns.defocus,
        "pixel_size": ns.pixel_size,
        "shift_y": ns.shift_y,
        "shift_x": ns.shift_x,
    }
    out = _post(client, "/probe", body)
    _write_b64(out["container"], ns.out, "probe")
    return 0


def _cmd_simulate(client: httpx.Client, ns: argparse.Namespace) -> int:
    volume = _read_array(ns.volume)
    from .service.models import encode_array

    if ns.modality == "mri":
        body = {"volume": encode_array(volume), "mask": _read_b64(ns.mask)}
        out = _post(client, "/simulate/mri", body)
    else:
        geometry = _geometry_payload(ns, volume.shape[-1], (ns.scan_rows, ns.scan_cols))
        body = {
            "volume": encode_array(volume),
            "geometry": geometry,
            "dose": ns.dose,
            "seed": ns.seed,
        }
        out = _post(client, "/simulate/stem", body)
    _write_b64(out["container"], ns.out, f"{ns.modality} measurements")
    return 0


def _cmd_recon(client: httpx.Client, ns: argparse.Namespace) -> int:
    body: dict = {
        "mode": ns.mode,
        "steps": ns.T,
        "candidates": ns.L,
        "refine_steps": ns.k_refine,
        "seed": ns.seed,
        "workers": ns.workers,
        "beta_min": ns.beta_min,
        "beta_max": ns.beta_max,
        "prior": {"kind": ns.prior, "cutoff": ns.cutoff},
        "mri_threshold": ns.threshold,
        "stem_threshold": ns.threshold,
    }
    if ns.step is not None:
        body["mri_step_size"] = ns.step
        body["stem_step_size"] = ns.step
    if ns.kspace is not None or ns.mask is not None:
        if ns.kspace is None or ns.mask is None:
            raise CliError("MRI reconstruction needs --kspace and --mask", _USAGE_EXIT)
        body["kspace"] = _read_b64(ns.kspace)
        body["mask"] = _read_b64(ns.mask)
    elif ns.intensities is not None:
        intensities = _read_array(ns.intensities)
        if intensities.ndim != 4:
            raise CliError("intensities container must be 4-D", _DATA_EXIT)
        from .service.models import encode_array

        body["intensities"] = encode_array(intensities)
        body["geometry"] = _geometry_payload(
            ns, intensities.shape[-1], (intensities.shape[0], intensities.shape[1])
        )
    else:
        raise CliError("provide --kspace/--mask or --intensities", _USAGE_EXIT)
    out = _post(client, "/recon", body)
    _write_b64(out["volume"], ns.out, "reconstruction")
    if ns.progress:
        with open(ns.progress, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["stage", "step", "loss", "score"])
            for row in out["progress"]:
                writer.writerow([row["stage"], row["step"], row["loss"], row["score"]])
        print(f"wrote progress log: {ns.progress}")
    return 0


def _cmd_metrics(client: httpx.Client, ns: argparse.Namespace) -> int:
    body = {
        "kind": ns.kind,
        "reference": _read_b64(ns.reference),
        "test": _read_b64(ns.test),
    }
    out = _post(client, "/metrics", body)
    print(f"{ns.kind} = {out['value']:.10g}")
    return 0


def _cmd_export(client: httpx.Client, ns: argparse.Namespace) -> int:
    body: dict = {"image": _read_b64(ns.image)}
    if ns.vmin is not None or ns.vmax is not None:
        body["vmin"] = ns.vmin
        body["vmax"] = ns.vmax
    out = _post(client, "/export/pgm", body)
    Path(ns.out).write_bytes(base64.b64decode(out["pgm"]))
    print(f"wrote PGM: {ns.out}")
    return 0


def _cmd_bench(client: httpx.Client, ns: argparse.Namespace) -> int:
    workers = [int(w) for w in ns.workers.split(",") if w.strip()]
    if not workers:
        raise CliError("need at least one worker count", _USAGE_EXIT)
    body = {
        "slices": ns.slices,
        "size": ns.size,
        "steps": ns.T,
        "workers": workers,
        "seed": ns.seed,
        "prior": {"kind": ns.prior, "cutoff": ns.cutoff},
    }
    out = _post(client, "/bench", body)
    rows = out["rows"]
    with open(ns.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["workers", "seconds", "peak_worker_bytes", "checksum"])
        for row in rows:
            writer.writerow(
                [row["workers"], f"{row['seconds']:.6f}", row["peak_worker_bytes"], row["checksum"]]
            )
    for row in rows:
        print(
            f"G={row['workers']:>3}  {row['seconds']:.3f}s  "
            f"peak={row['peak_worker_bytes']:>12} B  sha256={row['checksum'][:16]}"
        )
    print(f"wrote bench CSV: {ns.out}")
    return 0


def _cmd_serve(_: httpx.Client, ns: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("msrd.service.app:app", host=ns.host, port=ns.port)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_geometry_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--slices", type=int, default=2, help="object slice count")
    p.add_argument("--slice-spacing", dest="slice_spacing", type=float, default=2.0)
    p.add_argument("--scan-step", dest="scan_step", type=float, default=1.4)
    p.add_argument("--wavelength", type=float, default=0.0197)
    p.add_argument("--semi-angle", dest="semi_angle", type=float, default=0.025)
    p.add_argument("--defocus", type=float, default=0.0)
    p.add_argument("--pixel-size", dest="pixel_size", type=float, default=0.35)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="msrd", description="multi-slice reconstruction engine client"
    )
    parser.add_argument("--server", help="service URL; default runs the service in-process")
    parser.add_argument("--config", help="key=value defaults file (CLI flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("make-phantom", help="generate a synthetic volume")
    p.add_argument("--kind", choices=("mri", "crystal"), default="mri")
    p.add_argument("--slices", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pixel-size", dest="pixel_size", type=float, default=0.35)
    p.add_argument("--lattice-constant", dest="lattice_constant", type=float, default=5.6533)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--width", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_phantom)
    commands["make-phantom"] = p

    p = sub.add_parser("make-mask", help="generate a k-space sampling mask")
    p.add_argument("--kind", choices=("uniform", "gaussian"), default="uniform")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--accel", type=float, required=True)
    p.add_argument("--center-frac", dest="center_frac", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_mask)
    commands["make-mask"] = p

    p = sub.add_parser("make-probe", help="generate a focused probe")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--wavelength", type=float, required=True)
    p.add_argument("--semi-angle", dest="semi_angle", type=float, required=True)
    p.add_argument("--defocus", type=float, default=0.0)
    p.add_argument("--pixel-size", dest="pixel_size", type=float, required=True)
    p.add_argument("--shift-y", dest="shift_y", type=int, default=0)
    p.add_argument("--shift-x", dest="shift_x", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_probe)
    commands["make-probe"] = p

    p = sub.add_parser("simulate", help="simulate measurements from a volume")
    p.add_argument("--modality", choices=("mri", "stem"), required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--mask", help="mask container (MRI)")
    p.add_argument("--scan-rows", dest="scan_rows", type=int, default=8)
    p.add_argument("--scan-cols", dest="scan_cols", type=int, default=8)
    _add_geometry_flags(p)
    p.add_argument("--dose", type=float, default=None, help="Poisson counts per pattern")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)
    commands["simulate"] = p

    p = sub.add_parser("recon", help="reconstruct a volume from measurements")
    p.add_argument("--mode", choices=("dart", "drift", "physics"), required=True)
    p.add_argument("--kspace", help="k-space container (MRI)")
    p.add_argument("--mask", help="mask container (MRI)")
    p.add_argument("--intensities", help="diffraction container (STEM)")
    _add_geometry_flags(p)
    p.add_argument("--T", dest="T", type=int, default=100, help="diffusion steps / iterations")
    p.add_argument("--L", dest="L", type=int, default=16, help="DRIFT candidate count")
    p.add_argument("--k-refine", dest="k_refine", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=None, help="physics step size (default: modality default)")
    p.add_argument("--threshold", type=float, default=0.0, help="proximal soft-threshold")
    p.add_argument("--prior", choices=("zero", "shrinkage"), default="shrinkage")
    p.add_argument("--cutoff", type=float, default=0.35, help="shrinkage prior spectral cutoff")
    p.add_argument("--beta-min", dest="beta_min", type=float, default=1e-4)
    p.add_argument("--beta-max", dest="beta_max", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.add_argument("--progress", help="progress CSV path")
    p.set_defaults(func=_cmd_recon)
    commands["recon"] = p

    p = sub.add_parser("metrics", help="compare two containers")
    p.add_argument("--kind", choices=("ssim", "psnr", "rel"), required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=_cmd_metrics)
    commands["metrics"] = p

    p = sub.add_parser("export", help="export a real 2-D container as PGM")
    p.add_argument("--image", required=True)
    p.add_argument("--vmin", type=float, default=None)
    p.add_argument("--vmax", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)
    commands["export"] = p

    p = sub.add_parser("bench", help="partition timing and working-set accounting")
    p.add_argument("--slices", type=int, default=32)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--T", dest="T", type=int, default=8)
    p.add_argument("--workers", default="1,2,4,8", help="comma-separated worker counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prior", choices=("zero", "shrinkage"), default="shrinkage")
    p.add_argument("--cutoff", type=float, default=0.35)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=_cmd_bench)
    commands["bench"] = p

    p = sub.add_parser("serve", help="run the service with uvicorn")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)
    commands["serve"] = p

    return parser, commands


def _load_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {path}", _DATA_EXIT)
    values: dict[str, str] = {}
    for line_no, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"config line {line_no} is not key=value: {raw!r}", _DATA_EXIT)
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_defaults(commands: dict[str, argparse.ArgumentParser], cfg: dict[str, str]) -> None:
    for p in commands.values():
        for action in p._actions:
            if action.dest in cfg:
                raw = cfg[action.dest]
                if action.type is not None:
                    action.default = action.type(raw)
                elif isinstance(action.default, bool):
                    action.default = raw.lower() in ("1", "true", "yes", "on")
                else:
                    action.default = raw
                if action.required:
                    action.required = False


def main(argv: list[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre_ns, _ = pre.parse_known_args(args)

    parser, commands = build_parser()
    try:
        if pre_ns.config:
            _apply_config_defaults(commands, _load_config_file(pre_ns.config))
        try:
            ns = parser.parse_args(args)
        except SystemExit as exc:
            # argparse uses exit code 2 for usage problems; --help exits 0
            return 0 if exc.code in (0, None) else _USAGE_EXIT
        _print_config(ns.command, ns)
        if ns.command == "serve":
            return _cmd_serve(None, ns)  # type: ignore[arg-type]
        with _client(ns.server) as client:
            return ns.func(client, ns)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"error: {exc}", file=sys.stderr)
        return _DATA_EXIT


if __name__ == "__main__":
    raise SystemExit(main())
