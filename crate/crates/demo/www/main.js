import init, { pool_bode, meanfield_sine, tcl_run } from "./pkg/ddispatch_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

function plot(canvas, xs, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.y).filter(Number.isFinite);
  let lo = opts.ymin ?? Math.min(...all);
  let hi = opts.ymax ?? Math.max(...all);
  if (hi - lo < 1e-12) { lo -= 1; hi += 1; }
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad + ((y - lo) / (hi - lo)) * -(h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toPrecision(3), 2, pad + 4);
  ctx.fillText(lo.toPrecision(3), 2, h - pad);
  ctx.fillText(opts.xlabel ?? "", w / 2 - 20, h - 8);
  ctx.fillText(opts.ylabel ?? "", pad, pad - 8);
  for (const band of opts.bands ?? []) {
    ctx.strokeStyle = "#bbb";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(pad, py(band));
    ctx.lineTo(w - pad, py(band));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  series.forEach((s, i) => {
    ctx.strokeStyle = s.color ?? COLORS[i % COLORS.length];
    ctx.beginPath();
    s.y.forEach((y, k) => (k ? ctx.lineTo(px(xs[k]), py(y)) : ctx.moveTo(px(xs[k]), py(y))));
    ctx.stroke();
  });
}

const num = (id) => Number(document.getElementById(id).value);
const status = document.getElementById("status");

function guarded(fn) {
  return () => {
    try {
      status.textContent = "";
      fn();
    } catch (e) {
      status.textContent = String(e);
    }
  };
}

function runBode() {
  const data = JSON.parse(pool_bode(num("bode-zeta"), 256));
  const series = data.series.map((s, i) => ({ y: s.mag_db, color: COLORS[i] }));
  plot(document.getElementById("bode-mag"), data.theta, series, { xlabel: "θ (rad/sample)", ylabel: "|G⁺| (dB)" });
  plot(
    document.getElementById("bode-phase"),
    data.theta,
    data.series.map((s, i) => ({ y: s.phase_deg, color: COLORS[i] })),
    { xlabel: "θ (rad/sample)", ylabel: "phase (deg)" },
  );
  document.getElementById("bode-legend").innerHTML = data.series
    .map((s, i) => `<span style="color:${COLORS[i]}">■ ${s.label}</span>`)
    .join("");
}

function runMeanfield() {
  const design = document.getElementById("mf-design").value;
  const data = JSON.parse(meanfield_sine(design, num("mf-amp"), num("mf-period"), 8 * num("mf-period")));
  const t = data.y.map((_, k) => k);
  const scale = Math.max(...data.zeta.map(Math.abs)) || 1;
  const spread = Math.max(...data.y.map((v) => Math.abs(v - data.mean_power))) || 1;
  plot(
    document.getElementById("mf-plot"),
    t,
    [
      { y: data.y.map((v) => (v - data.mean_power) / spread) },
      { y: data.zeta.map((z) => z / scale), color: "#aaa" },
    ],
    { xlabel: "step (5 min)", ylabel: "normalized deviation: power (blue), ζ (grey)" },
  );
}

function runTcl() {
  const data = JSON.parse(tcl_run(num("tcl-zeta"), num("tcl-hours"), BigInt(num("tcl-seed"))));
  const hours = data.t_s.map((s) => s / 3600);
  plot(document.getElementById("tcl-plot"), hours, [{ y: data.theta }], {
    xlabel: "hours",
    ylabel: "temperature (°C)",
    bands: data.deadband,
  });
  const on = data.mode.filter((m) => m === 1).length / data.mode.length;
  document.getElementById("tcl-info").textContent =
    `on ${(100 * on).toFixed(1)}% of the time, overrides ${(100 * data.override_rate).toFixed(2)}% of epochs`;
}

await init();
status.textContent = "";
document.getElementById("bode-run").onclick = guarded(runBode);
document.getElementById("mf-run").onclick = guarded(runMeanfield);
document.getElementById("tcl-run").onclick = guarded(runTcl);
guarded(runBode)();
