/**
 * Single-file browser page for the operator console.
 *
 * Served by the HTTP bridge with no external assets: charts are drawn on
 * canvases by hand and slice images are decoded from the base64 payloads
 * carried by the event stream.  All values on screen come from the server's
 * folded view; the page does no metric computation of its own.
 */

export const PAGE_HTML = `<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Acquisition console</title>
<style>
  body { font: 14px/1.4 system-ui, sans-serif; margin: 1rem; background: #111; color: #ddd; }
  h1 { font-size: 1.1rem; margin: 0 0 .5rem; }
  .row { display: flex; gap: 1rem; flex-wrap: wrap; align-items: flex-start; }
  canvas { background: #1b1b1b; border: 1px solid #333; image-rendering: pixelated; }
  .card { border: 1px solid #333; padding: .6rem .8rem; border-radius: 4px; background: #181818; }
  .banner { background: #4a3b00; border-color: #917400; display: none; }
  .toast { background: #4a0f0f; border-color: #a33; display: none; }
  .ended { background: #0f3a1d; border-color: #2d7a47; display: none; }
  button { margin-right: .5rem; }
  button:disabled { opacity: .4; }
  label { margin-right: .4rem; }
  .slice-label { text-align: center; font-size: .8rem; color: #999; }
  #status { color: #8ab4f8; }
</style>
</head>
<body>
<h1>Acquisition console <span id="status">connecting…</span></h1>
<div class="row">
  <div class="card">
    <div>projections: <b id="n">0</b> &nbsp; last angle: <b id="angle">–</b>°
      &nbsp; restarts: <b id="restarts">0</b></div>
    <div id="banner" class="card banner"></div>
    <div id="ended" class="card ended"></div>
    <div id="toast" class="card toast"></div>
    <div style="margin-top:.6rem">
      <button id="stop">stop now</button>
      <button id="continue">continue</button>
      <label>rotate° <input id="rot" type="number" value="0" step="5" style="width:4.5rem"></label>
      <button id="reorient">reorient</button>
    </div>
  </div>
</div>
<div class="row" style="margin-top:1rem">
  <div>
    <canvas id="srod" width="460" height="220"></canvas>
    <div class="slice-label">residual difference (log scale, line = threshold)</div>
  </div>
  <div>
    <canvas id="snr" width="460" height="220"></canvas>
    <div class="slice-label">signal-to-noise [dB]</div>
  </div>
</div>
<div class="row" id="slices" style="margin-top:1rem"></div>
<script>
"use strict";
const el = (id) => document.getElementById(id);
let view = null;

function decodePixels(slice) {
  const raw = atob(slice.pixels_b64);
  const bytes = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
  const dv = new DataView(bytes.buffer);
  const out = new Float32Array(raw.length / 4);
  for (let i = 0; i < out.length; i++) out[i] = dv.getFloat32(i * 4, true);
  return out;
}

function drawSlice(slice, canvas) {
  const [rows, cols] = slice.shape;
  canvas.width = cols;
  canvas.height = rows;
  canvas.style.width = Math.max(cols, 128) + "px";
  const pixels = decodePixels(slice);
  const span = slice.max - slice.min;
  const img = canvas.getContext("2d").createImageData(cols, rows);
  for (let i = 0; i < pixels.length; i++) {
    const g = span > 0 ? Math.round(((pixels[i] - slice.min) / span) * 255) : 0;
    img.data[i * 4] = img.data[i * 4 + 1] = img.data[i * 4 + 2] = g;
    img.data[i * 4 + 3] = 255;
  }
  canvas.getContext("2d").putImageData(img, 0, 0);
}

function drawChart(canvas, points, opts) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 34;
  ctx.clearRect(0, 0, W, H);
  ctx.strokeStyle = "#444";
  ctx.strokeRect(pad, 8, W - pad - 8, H - pad - 8);
  if (!points.length) return;
  const ys = points.map((p) => opts.log ? Math.log10(Math.max(p.value, 1e-12)) : p.value);
  let yMin = Math.min(...ys), yMax = Math.max(...ys);
  if (opts.hline !== null && opts.hline !== undefined) {
    const h = opts.log ? Math.log10(Math.max(opts.hline, 1e-12)) : opts.hline;
    yMin = Math.min(yMin, h); yMax = Math.max(yMax, h);
  }
  if (yMax - yMin < 1e-9) { yMax += 1; yMin -= 1; }
  const xMin = points[0].n, xMax = Math.max(points[points.length - 1].n, xMin + 1);
  const X = (n) => pad + ((n - xMin) / (xMax - xMin)) * (W - pad - 8);
  const Y = (v) => 8 + (1 - (v - yMin) / (yMax - yMin)) * (H - pad - 16);
  if (opts.hline !== null && opts.hline !== undefined) {
    const h = opts.log ? Math.log10(Math.max(opts.hline, 1e-12)) : opts.hline;
    ctx.strokeStyle = "#a33"; ctx.setLineDash([4, 4]);
    ctx.beginPath(); ctx.moveTo(pad, Y(h)); ctx.lineTo(W - 8, Y(h)); ctx.stroke();
    ctx.setLineDash([]);
  }
  if (opts.vline !== null && opts.vline !== undefined) {
    ctx.strokeStyle = "#2d7a47";
    ctx.beginPath(); ctx.moveTo(X(opts.vline), 8); ctx.lineTo(X(opts.vline), H - pad + 8); ctx.stroke();
  }
  ctx.strokeStyle = opts.color; ctx.beginPath();
  points.forEach((p, i) => {
    const x = X(p.n), y = Y(ys[i]);
    if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#888"; ctx.font = "10px sans-serif";
  ctx.fillText(String(xMin), pad, H - pad + 20);
  ctx.fillText(String(xMax), W - 30, H - pad + 20);
  ctx.fillText(yMax.toFixed(2), 2, 14);
  ctx.fillText(yMin.toFixed(2), 2, H - pad - 8);
}

function render() {
  if (!view) return;
  el("n").textContent = view.n;
  el("angle").textContent = view.lastAngleDeg === null ? "–" : view.lastAngleDeg.toFixed(2);
  el("restarts").textContent = view.restarts.length;
  const banner = el("banner");
  if (view.banner) {
    banner.style.display = "block";
    banner.textContent = "stop suggested at n=" + view.banner.suggestedN +
      " (" + view.banner.rationale + ")";
  } else banner.style.display = "none";
  const ended = el("ended");
  if (view.ended) {
    ended.style.display = "block";
    ended.textContent = "session ended: used " + view.ended.nUsed +
      " projections (" + view.ended.stopReason + ")";
  } else ended.style.display = "none";
  const toast = el("toast");
  if (view.toast) { toast.style.display = "block"; toast.textContent = view.toast; }
  else toast.style.display = "none";
  for (const id of ["stop", "continue", "reorient"]) el(id).disabled = !view.controlsEnabled;
  drawChart(el("srod"), view.srod, { log: true, color: "#8ab4f8", hline: view.threshold, vline: view.convergedAt });
  drawChart(el("snr"), view.snr, { log: false, color: "#f8b48a", hline: null, vline: null });
  const host = el("slices");
  view.slices.forEach((slice, i) => {
    let cell = host.children[i];
    if (!cell) {
      cell = document.createElement("div");
      cell.innerHTML = '<canvas></canvas><div class="slice-label"></div>';
      host.appendChild(cell);
    }
    drawSlice(slice, cell.querySelector("canvas"));
    cell.querySelector(".slice-label").textContent =
      slice.plane + " @ " + slice.offset + " rot " + slice.rotation_deg + "°";
  });
}

async function sendControl(command) {
  const response = await fetch("/control", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(command),
  });
  if (!response.ok) {
    const body = await response.json().catch(() => ({}));
    el("toast").style.display = "block";
    el("toast").textContent = "control rejected: " + (body.error || response.status);
  }
}

el("stop").onclick = () => sendControl({ command: "stop" });
el("continue").onclick = () => sendControl({ command: "continue" });
el("reorient").onclick = () => {
  if (!view || !view.slices.length) return;
  const rotation = Number(el("rot").value) || 0;
  sendControl({
    command: "reorient",
    slice_specs: view.slices.map((s) => ({
      plane: s.plane, offset: s.offset, rotation_deg: rotation,
    })),
  });
};

const source = new EventSource("/events");
source.onopen = () => { el("status").textContent = "live"; };
source.onerror = () => { el("status").textContent = "disconnected"; };
source.onmessage = (message) => {
  const data = JSON.parse(message.data);
  view = data.view;
  if (data.reply && data.reply.kind === "control_error") {
    view.toast = "control error: " + (data.reply.payload.error || "rejected");
  }
  render();
};
</script>
</body>
</html>
`;
