import init, { Demo } from "./pkg/rpforest_wasm.js";

const plot = document.getElementById("plot");
const ctx = plot.getContext("2d");
const status = document.getElementById("status");
const val = (id) => Number(document.getElementById(id).value);

let demo = null;
let points = [];
let forest = null;
let lastQuery = null;
let bounds = { x0: -1, x1: 1, y0: -1, y1: 1 };

function fit() {
  const xs = points.map((p) => p[0]);
  const ys = points.map((p) => p[1]);
  const pad = 0.05;
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const y0 = Math.min(...ys), y1 = Math.max(...ys);
  const w = Math.max(x1 - x0, 1e-6), h = Math.max(y1 - y0, 1e-6);
  bounds = { x0: x0 - pad * w, x1: x1 + pad * w, y0: y0 - pad * h, y1: y1 + pad * h };
}

const toPx = (p) => [
  ((p[0] - bounds.x0) / (bounds.x1 - bounds.x0)) * plot.width,
  plot.height - ((p[1] - bounds.y0) / (bounds.y1 - bounds.y0)) * plot.height,
];
const fromPx = (x, y) => [
  bounds.x0 + (x / plot.width) * (bounds.x1 - bounds.x0),
  bounds.y0 + ((plot.height - y) / plot.height) * (bounds.y1 - bounds.y0),
];

function hue(j) {
  return `hsl(${(j * 137.508) % 360}, 65%, 55%)`;
}

function draw() {
  ctx.clearRect(0, 0, plot.width, plot.height);
  const t = Math.min(val("shown"), forest ? forest.leaf_of_point.length - 1 : 0);
  const leafOf = forest && forest.leaf_of_point.length ? forest.leaf_of_point[t] : null;
  points.forEach((p, i) => {
    const [x, y] = toPx(p);
    ctx.fillStyle = leafOf ? hue(leafOf[i]) : "#888";
    ctx.fillRect(x - 2, y - 2, 4, 4);
  });
  if (!lastQuery) return;
  const { q, out } = lastQuery;
  ctx.strokeStyle = "rgba(0,0,0,0.35)";
  for (const i of out.candidates) {
    const [x, y] = toPx(points[i]);
    ctx.beginPath();
    ctx.arc(x, y, 5, 0, 2 * Math.PI);
    ctx.stroke();
  }
  ctx.fillStyle = "#1f5fd6";
  for (const i of out.approx) {
    const [x, y] = toPx(points[i]);
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.strokeStyle = "#d62728";
  for (const i of out.exact) {
    const [x, y] = toPx(points[i]);
    ctx.beginPath();
    ctx.moveTo(x - 5, y - 5); ctx.lineTo(x + 5, y + 5);
    ctx.moveTo(x + 5, y - 5); ctx.lineTo(x - 5, y + 5);
    ctx.stroke();
  }
  const [qx, qy] = toPx(q);
  ctx.fillStyle = "#000";
  ctx.fillRect(qx - 4, qy - 4, 8, 8);
}

function drawGrid(result) {
  const g = document.getElementById("grid");
  const c = g.getContext("2d");
  c.clearRect(0, 0, g.width, g.height);
  const rows = result.grid_report;
  if (!rows.length) return;
  const maxCost = Math.max(...rows.map((r) => r.cost));
  const px = (r) => [(Math.log1p(r.cost) / Math.log1p(maxCost)) * (g.width - 10) + 5, g.height - 5 - r.recall * (g.height - 10)];
  c.fillStyle = "rgba(31,95,214,0.3)";
  for (const r of rows) {
    const [x, y] = px(r);
    c.fillRect(x - 1, y - 1, 2, 2);
  }
  const ty = g.height - 5 - val("target") * (g.height - 10);
  c.strokeStyle = "#d62728";
  c.beginPath(); c.moveTo(0, ty); c.lineTo(g.width, ty); c.stroke();
  c.fillStyle = "#000";
  c.fillText("recall vs log cost", 5, 12);
}

function guard(f) {
  try {
    f();
  } catch (e) {
    status.textContent = `error: ${e.message ?? e}`;
  }
}

function describe() {
  if (!forest) return "";
  return forest.exhaustive
    ? "index: exhaustive scan"
    : `index: T=${forest.trees} l=${forest.depth} v=${forest.vote_threshold}`;
}

function regenerate() {
  guard(() => {
    demo?.free();
    demo = new Demo(val("n"), val("classes"), val("spread"), val("seed"));
    points = JSON.parse(demo.points()).points;
    fit();
    build();
  });
}

function build() {
  guard(() => {
    forest = JSON.parse(demo.build(val("trees"), val("depth"), val("vote"), val("seed")));
    lastQuery = null;
    status.textContent = describe();
    draw();
  });
}

function tune() {
  guard(() => {
    const out = JSON.parse(demo.tune(val("target"), val("k"), val("trees"), val("seed")));
    forest = out.forest;
    lastQuery = null;
    const r = out.result;
    status.textContent = `${describe()}\nestimated recall ${r.estimated_recall.toFixed(3)}` +
      `${r.infeasible ? " (target not reachable)" : ""}\nestimated cost ${r.estimated_cost.toFixed(1)}`;
    drawGrid(r);
    draw();
  });
}

plot.addEventListener("click", (ev) => {
  if (!demo) return;
  guard(() => {
    const rect = plot.getBoundingClientRect();
    const q = fromPx(ev.clientX - rect.left, ev.clientY - rect.top);
    const out = JSON.parse(demo.query(q[0], q[1], val("k")));
    lastQuery = { q, out };
    status.textContent = `${describe()}\ncandidates ${out.candidates.length}, recall ${out.recall.toFixed(2)}, fallback ${out.fallback}`;
    draw();
  });
});
document.getElementById("regen").onclick = regenerate;
document.getElementById("build").onclick = build;
document.getElementById("tune").onclick = tune;
document.getElementById("shown").onchange = draw;

await init();
regenerate();
