import init, { Demo } from './pkg/skf_web.js';

const $ = (id) => document.getElementById(id);
const status = (text) => { $('status').textContent = text; };

let demo = null;
let demoActive = null;

function params() {
  return {
    ep: Number($('ep').value),
    pm: Number($('pm').value),
    noise: Number($('noise').value),
    alpha: Number($('alpha').value),
    smooth: $('smooth').checked,
    rep: Math.max(0, Math.floor(Number($('rep').value) || 0)),
  };
}

function ensureDemo() {
  const active = $('active').value;
  if (demo === null || demoActive !== active) {
    if (demo !== null) demo.free();
    demo = new Demo(12, active);
    demoActive = active;
  }
  return demo;
}

function drawCourses(data) {
  const cv = $('courses');
  const g = cv.getContext('2d');
  const w = cv.width, h = cv.height, pad = 36;
  g.clearRect(0, 0, w, h);
  const t = data.times_ms;
  const x = (v) => pad + (v - t[0]) / (t[t.length - 1] - t[0]) * (w - 2 * pad);
  const y = (v) => h / 2 - v * (h / 2 - pad / 2);
  g.strokeStyle = '#999';
  g.beginPath();
  g.moveTo(pad, y(0)); g.lineTo(w - pad, y(0));
  g.moveTo(pad, y(1)); g.lineTo(pad, y(-1));
  g.stroke();
  g.fillStyle = '#333';
  g.fillText('1', 8, y(1) + 4);
  g.fillText('-1', 8, y(-1) + 4);
  g.fillText(`${t[0].toFixed(1)} ms`, pad, h - 6);
  g.fillText(`${t[t.length - 1].toFixed(1)} ms`, w - pad - 30, h - 6);
  const line = (vals, color, dashed) => {
    g.strokeStyle = color;
    g.setLineDash(dashed ? [5, 4] : []);
    g.lineWidth = dashed ? 1 : 2;
    g.beginPath();
    vals.forEach((v, i) => (i ? g.lineTo(x(t[i]), y(v)) : g.moveTo(x(t[i]), y(v))));
    g.stroke();
  };
  line(data.deep_true, '#6a9fce', true);
  line(data.sup_true, '#e07a7b', true);
  line(data.deep_est, '#1f77b4', false);
  line(data.sup_est, '#d62728', false);
  g.setLineDash([]);
  for (const k of [data.t_deep, data.t_sup]) {
    g.strokeStyle = '#ccc';
    g.beginPath(); g.moveTo(x(t[k]), pad / 2); g.lineTo(x(t[k]), h - pad); g.stroke();
  }
}

function showMetrics(data) {
  const m = data.metrics;
  const f = (v, d = 1) => (v === null ? 'n/a' : v.toFixed(d));
  $('metrics').textContent = [
    `localization error   deep ${f(m.loc_err_deep_mm)} mm (unstandardized ${f(m.loc_err_deep_unstd_mm)} mm)`,
    `                     superficial ${f(m.loc_err_sup_mm)} mm (unstandardized ${f(m.loc_err_sup_unstd_mm)} mm)`,
    `echo ratio           ${f(m.echo_ratio, 3)}`,
    `waveform correlation deep ${f(m.corr_deep, 3)}, superficial ${f(m.corr_sup, 3)}`,
  ].join('\n');
}

function drawSlice(data) {
  const cv = $('slice');
  const g = cv.getContext('2d');
  const w = cv.width, h = cv.height;
  const scale = (w / 2 - 10) / data.radius_mm;
  const px = (xz) => [w / 2 + xz[0] * scale, h / 2 - xz[1] * scale];
  g.clearRect(0, 0, w, h);
  g.strokeStyle = '#bbb';
  g.beginPath(); g.arc(w / 2, h / 2, data.radius_mm * scale, 0, 2 * Math.PI); g.stroke();
  const cell = data.spacing_mm * scale;
  for (const [xm, zm, a] of data.points) {
    const [cx, cy] = px([xm, zm]);
    const shade = Math.round(255 * (1 - Math.max(0, Math.min(1, a))));
    g.fillStyle = `rgb(255, ${shade}, ${shade})`;
    g.fillRect(cx - cell / 2, cy - cell / 2, cell, cell);
  }
  g.strokeStyle = '#000';
  for (const s of [data.deep, data.sup]) {
    const [cx, cy] = px(s);
    g.beginPath(); g.arc(cx, cy, cell / 2 + 2, 0, 2 * Math.PI); g.stroke();
  }
  const [mx, my] = px(data.peak);
  g.beginPath();
  g.moveTo(mx - 5, my - 5); g.lineTo(mx + 5, my + 5);
  g.moveTo(mx + 5, my - 5); g.lineTo(mx - 5, my + 5);
  g.stroke();
}

function showPriors(noise) {
  const table = JSON.parse(ensureDemo().priors(noise));
  const rows = table.rows.map((r) =>
    `<tr><td>${r.ep_snr_db}</td><td>${r.pm_snr_db}</td><td>${r.theta0.toExponential(4)}</td><td>${r.tau_sq.toExponential(4)}</td></tr>`);
  $('priors').innerHTML =
    `<p>relative noise level &sigma; = ${table.sigma.toPrecision(4)}</p>` +
    '<table><tr><th>EP-SNR (dB)</th><th>PM-SNR (dB)</th><th>&theta;<sub>0</sub></th><th>&tau;<sup>2</sup></th></tr>' +
    rows.join('') + '</table>';
}

function guarded(fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
  };
}

const run = guarded(() => {
  const p = params();
  const d = ensureDemo();
  const start = performance.now();
  const data = JSON.parse(d.courses(p.ep, p.pm, p.noise, p.alpha, p.smooth, p.rep));
  drawCourses(data);
  showMetrics(data);
  showPriors(p.noise);
  redrawSlice();
  status(`${d.nodeCount()} nodes, ${d.stepCount()} steps; theta0 ${data.theta0.toExponential(3)}, tau^2 ${data.tau_sq.toExponential(3)}; ${(performance.now() - start).toFixed(0)} ms`);
});

const redrawSlice = guarded(() => {
  const p = params();
  const step = Number($('step').value);
  $('stepLabel').textContent = ` ${step}`;
  drawSlice(JSON.parse(ensureDemo().slice(p.ep, p.pm, p.noise, p.alpha, p.smooth, p.rep, step)));
});

await init();
$('run').addEventListener('click', run);
$('step').addEventListener('change', redrawSlice);
$('noise').addEventListener('change', guarded(() => showPriors(Number($('noise').value))));
status('building head model');
setTimeout(run, 0);
