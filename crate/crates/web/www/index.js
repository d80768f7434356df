import init, { simulate, partition_demo, reduce_window } from "./pkg/evstream_web.js";

const TRACK_COLOURS = ["#36c", "#c63", "#393", "#939", "#c93", "#399", "#666", "#c36"];

function formValues(form) {
  return Object.fromEntries(new FormData(form).entries());
}

function guard(errId, fn) {
  const el = document.getElementById(errId);
  try {
    el.textContent = "";
    fn();
  } catch (e) {
    el.textContent = String(e);
  }
}

// --- adaptive subscription ---

function tomlFrom(v) {
  return [
    `bandwidth_mbps = ${Number(v.bandwidth_mbps)}`,
    `tracks = ${parseInt(v.tracks, 10)}`,
    `events_per_track = ${parseInt(v.events_per_track, 10)}`,
    `latency_target_ms = ${Number(v.latency_target_ms)}`,
    `duration_s = ${Number(v.duration_s)}`,
    `profile = "${v.profile}"`,
    `strategy = "${v.strategy}"`,
  ].join("\n");
}

function drawSim(view) {
  const c = document.getElementById("sim-chart");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const s = view.series;
  if (!s.length) return;
  const pad = 30;
  const w = c.width - 2 * pad, h = c.height - 2 * pad;
  const x = (i) => pad + (i / Math.max(1, s.length - 1)) * w;
  const maxLat = Math.max(view.config.latency_target_ms * 2, ...s.map((p) => p.latency_ms));
  const maxSrc = Math.max(1, ...s.map((p) => p.source ?? p.received));

  g.fillStyle = "#eee";
  s.forEach((p, i) => {
    const bh = ((p.source ?? p.received) / maxSrc) * h;
    g.fillRect(x(i), pad + h - bh, Math.max(1, w / s.length), bh);
  });
  g.fillStyle = "#bbb";
  s.forEach((p, i) => {
    const bh = (p.received / maxSrc) * h;
    g.fillRect(x(i), pad + h - bh, Math.max(1, w / s.length), bh);
  });

  const yTarget = pad + h - (view.config.latency_target_ms / maxLat) * h;
  g.strokeStyle = "#c33";
  g.setLineDash([4, 4]);
  g.beginPath(); g.moveTo(pad, yTarget); g.lineTo(pad + w, yTarget); g.stroke();
  g.setLineDash([]);

  const line = (colour, f) => {
    g.strokeStyle = colour;
    g.beginPath();
    s.forEach((p, i) => (i ? g.lineTo(x(i), f(p)) : g.moveTo(x(i), f(p))));
    g.stroke();
  };
  line("#c33", (p) => pad + h - (p.latency_ms / maxLat) * h);
  line("#36c", (p) => pad + h - (p.tracks / view.config.tracks) * h);

  g.fillStyle = "#222";
  g.fillText(`${maxLat.toFixed(1)} ms / ${view.config.tracks} tracks`, 2, pad - 8);
  g.fillText("0", 2, pad + h);
  g.fillText(`window ${s.length - 1}`, pad + w - 60, pad + h + 18);
}

function runSim() {
  guard("sim-err", () => {
    const view = JSON.parse(simulate(tomlFrom(formValues(document.getElementById("sim-form")))));
    drawSim(view);
    const s = view.summary;
    const rows = [
      ["windows", s.windows],
      ["mean / median / max latency", `${s.mean_latency_ms.toFixed(2)} / ${s.median_latency_ms.toFixed(2)} / ${s.max_latency_ms.toFixed(2)} ms`],
      ["throughput", `${s.mean_throughput_mbps.toFixed(2)} Mbps`],
      ["events lost", `${((s.loss_fraction ?? 0) * 100).toFixed(1)} % (${view.publisher_dropped} over the track cap)`],
    ];
    document.getElementById("sim-summary").innerHTML = rows.map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`).join("");
  });
}

// --- partitioning ---

function runPartition() {
  const form = document.getElementById("part-form");
  const v = formValues(form);
  const tracks = parseInt(v.tracks, 10);
  form.keep.max = tracks;
  form.keep_out.value = v.keep;
  guard("part-err", () => {
    const view = JSON.parse(partition_demo(v.strategy, parseInt(v.count, 10), tracks, parseInt(v.events_per_track, 10), parseInt(v.keep, 10)));
    const c = document.getElementById("part-canvas");
    const g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    const n = view.assignment.length;
    const cell = Math.min(30, Math.floor((c.width - 10) / Math.max(1, n)));
    const kept = new Set(view.reconstructed);
    view.assignment.forEach((t, i) => {
      g.fillStyle = t === null ? "#fff" : TRACK_COLOURS[t % TRACK_COLOURS.length];
      g.globalAlpha = kept.has(i) ? 1 : 0.25;
      g.fillRect(5 + i * cell, 10, cell - 1, 35);
      g.globalAlpha = 1;
      if (t === null) g.strokeRect(5 + i * cell + 0.5, 10.5, cell - 2, 34);
    });
    // reconstruction order, drawn underneath
    view.reconstructed.forEach((src, j) => {
      const t = view.assignment[src];
      g.fillStyle = TRACK_COLOURS[t % TRACK_COLOURS.length];
      g.fillRect(5 + j * cell, 65, cell - 1, 35);
    });
    const ordered = view.reconstructed.every((s, j) => j === 0 || s > view.reconstructed[j - 1]);
    const prefix = view.reconstructed.every((s, j) => s === j);
    document.getElementById("part-note").textContent =
      `top: source events coloured by track (faded = not received, outlined = over the cap). ` +
      `bottom: rebuilt window, ${view.reconstructed.length} events, ` +
      (prefix ? "an unbroken prefix of the source." : ordered ? "time-ordered but with gaps." : "out of order.");
  });
}

// --- reduction ---

function heat(canvasId, plane, width, height, scale) {
  const c = document.getElementById(canvasId);
  const g = c.getContext("2d");
  const img = g.createImageData(width, height);
  plane.forEach((v, i) => {
    const a = Math.min(255, Math.round((Math.abs(v) / scale) * 255));
    img.data.set(v >= 0 ? [255, 255 - a, 255 - a, 255] : [255 - a, 255 - a, 255, 255], i * 4);
  });
  const off = new OffscreenCanvas(width, height);
  off.getContext("2d").putImageData(img, 0, 0);
  g.imageSmoothingEnabled = false;
  g.drawImage(off, 0, 0, c.width, c.height);
}

function runReduce() {
  guard("red-err", () => {
    const v = formValues(document.getElementById("red-form"));
    const view = JSON.parse(reduce_window(parseInt(v.count, 10), Number(v.bandwidth), v.mode, BigInt(v.seed)));
    const scale = Math.max(1, ...view.source.map(Math.abs)) / 2;
    heat("red-source", view.source, view.width, view.height, scale);
    heat("red-kept", view.kept, view.width, view.height, scale / 4);

    const c = document.getElementById("red-bins");
    const g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    const max = Math.max(1, ...view.source_bins);
    const bw = (c.width - 20) / view.source_bins.length;
    view.source_bins.forEach((b, i) => {
      g.fillStyle = "#ddd";
      g.fillRect(10 + i * bw, c.height - 20 - (b / max) * (c.height - 40), bw - 3, (b / max) * (c.height - 40));
      const k = view.kept_bins[i];
      g.fillStyle = "#36c";
      g.fillRect(10 + i * bw, c.height - 20 - (k / max) * (c.height - 40), bw - 3, (k / max) * (c.height - 40));
    });
    g.fillStyle = "#222";
    g.fillText("5 ms sub-bins: source (grey) vs kept (blue)", 10, 14);
    document.getElementById("red-note").textContent =
      `budget ${view.budget} events per 50 ms window; kept ${view.kept_events} of ${view.source_events}. ` +
      "left: source window, middle: what the link carries (red = brightening, blue = darkening).";
  });
}

await init();
document.getElementById("sim-form").addEventListener("submit", (e) => { e.preventDefault(); runSim(); });
document.getElementById("part-form").addEventListener("input", runPartition);
document.getElementById("red-form").addEventListener("input", runReduce);
runSim();
runPartition();
runReduce();
