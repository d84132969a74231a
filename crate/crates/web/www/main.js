import init, { force_profile, CrossingDemo, enumerate_conflicts } from "./pkg/vmcollab_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function fail(e) {
  $("error").textContent = String(e);
}

function drawProfile() {
  let p;
  try {
    p = JSON.parse(force_profile(num("sigma"), num("fmax"), num("c0"), num("radius"), num("cap"), num("vhand"), 400));
    $("error").textContent = "";
  } catch (e) {
    return fail(e);
  }
  const c = $("profile"), g = c.getContext("2d");
  const pad = 36, w = c.width - 2 * pad, h = c.height - 2 * pad;
  const rMax = p.distance[p.distance.length - 1];
  const fMax = Math.max(...p.spring, ...p.damper, 1);
  const x = (r) => pad + (r / rMax) * w;
  const y = (f) => c.height - pad - (f / fMax) * h;
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, w, h);
  g.fillStyle = "#555";
  g.fillText(`${fMax.toFixed(1)} N`, 2, pad + 4);
  g.fillText(`${rMax.toFixed(2)} m`, c.width - pad - 30, c.height - pad + 16);
  for (const [key, colour] of [["spring", "#1f6fb4"], ["damper", "#c2571a"]]) {
    g.strokeStyle = colour;
    g.beginPath();
    p.distance.forEach((r, i) => (i ? g.lineTo(x(r), y(p[key][i])) : g.moveTo(x(r), y(p[key][i]))));
    g.stroke();
    g.fillStyle = colour;
    g.fillText(key, key === "spring" ? pad + 8 : pad + 60, pad + 14);
  }
  g.setLineDash([4, 4]);
  g.strokeStyle = "#1f6fb4";
  g.beginPath();
  g.moveTo(x(p.sigma), pad);
  g.lineTo(x(p.sigma), c.height - pad);
  g.stroke();
  g.setLineDash([]);
}

let demo = null, world = null, timer = null;

function restart() {
  if (timer) cancelAnimationFrame(timer);
  try {
    demo = new CrossingDemo($("negotiation").checked, BigInt(Math.max(0, Math.floor(num("seed")) || 0)));
  } catch (e) {
    return fail(e);
  }
  world = JSON.parse(demo.world());
  tick();
}

function tick() {
  // 0.1 s of simulated time per frame: about six times real time.
  const v = JSON.parse(demo.advance(25));
  drawTable(v);
  $("status").textContent = [
    `t = ${v.time.toFixed(2)} s   ${v.status}`,
    `blocks placed ${v.blocks_placed}`,
    `stalls detected ${v.stalls}, grants ${v.grants}`,
    `priority holder ${v.holder ?? "none"}`,
    "",
    ...v.robots.map((r) =>
      `${r.id}  ρ ${r.rho.toFixed(1).padStart(5)} N  |v| ${r.speed.toFixed(3)} m/s  ${r.phase}` +
      (r.goal_enabled ? "" : "  goal off") + (r.avoiding_robots ? "" : "  ignoring robots")),
  ].join("\n");
  if (v.status === "running" && v.time < 150) timer = requestAnimationFrame(tick);
}

function drawTable(v) {
  const c = $("table"), g = c.getContext("2d");
  const span = 0.9, s = c.width / span;
  const X = (x) => c.width / 2 + x * s, Y = (y) => c.height / 2 - y * s;
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#bbb";
  const half = (world.pitch * s) / 2;
  for (const [x, y] of world.cells) g.strokeRect(X(x) - half, Y(y) - half, 2 * half, 2 * half);
  g.fillStyle = "#d9c49a";
  for (const [x, y] of world.blocks) g.fillRect(X(x) - 4, Y(y) - 4, 8, 8);
  const colours = ["#1f6fb4", "#c2571a", "#2a8a3e", "#7a3fa0"];
  v.robots.forEach((r, i) => {
    g.fillStyle = colours[i % colours.length];
    g.beginPath();
    g.arc(X(r.x), Y(r.y), r.carrying ? 9 : 6, 0, 2 * Math.PI);
    g.fill();
    g.fillText(r.id, X(r.x) + 10, Y(r.y) - 8);
  });
}

function enumerate() {
  try {
    const rows = JSON.parse(enumerate_conflicts(3));
    $("conflicts").innerHTML =
      "<tr><th>robots</th><th>conflicting</th><th>assignments</th><th>probability</th></tr>" +
      rows.map((r) => `<tr><td>${r.robots}</td><td>${r.conflicting}</td><td>${r.total}</td><td>${(100 * r.probability).toFixed(2)} %</td></tr>`).join("");
  } catch (e) {
    fail(e);
  }
}

await init();
for (const id of ["sigma", "fmax", "c0", "radius", "cap", "vhand"]) $(id).addEventListener("input", drawProfile);
$("restart").addEventListener("click", restart);
$("negotiation").addEventListener("change", restart);
$("enumerate").addEventListener("click", enumerate);
drawProfile();
restart();
