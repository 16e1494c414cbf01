# coding = utf-8

EVENT_E_TEMPLATE = """adsim v{{ version }} -- dataset
N = {{ dataset.N }}, P = {{ dataset.P }}, d = {{ dataset.d }}
|S_L| = {{ dataset.learnable_indices | length }}, |S_U| = {{ dataset.unlearnable_indices | length }}
fingerprint {{ dataset.fingerprint()[:16] }}

Concentration event (delta = {{ report.delta }}): {{ "holds" if report.passed else "FAILS" }}
{%- for check in report.checks.values() %}
  {{ "%-3s" | format(check.name) }} {{ "pass" if check.passed else "FAIL" }}  {{ "%-42s" | format(check.description) }} worst {{ "%.4g" | format(check.worst) }}
{%- endfor %}
{%- if regime %}

Regime conditions (C = {{ regime.C }}):{% if regime.passed %} all met{% else %} {{ regime.failures | join(", ") }} not met{% endif %}
{%- endif %}
"""

RUN_SUMMARY_TEMPLATE = """adsim v{{ version }} -- {{ result.config.objective }} run
T = {{ result.config.T }}, eta = {{ result.config.eta }}, epsilon = {{ result.config.epsilon }}
{%- if result.config.teacher %}
teacher {{ result.config.teacher.kind.value }}, gamma = {{ result.config.teacher.gamma }}, unlearnable margin = {{ result.config.teacher.unlearnable_margin }}
{%- endif %}

robust train accuracy  {{ "%.3f" | format(result.final_robust_train_acc) }}
robust test accuracy   {{ "%.3f" | format(result.final_robust_test_acc) }} (peak {{ "%.3f" | format(result.peak.robust_test_acc) }} at {{ result.peak.iteration }})
degradation            {{ "%.3f" | format(result.degradation) }}
T0 = {{ result.hitting_times.T0 }}, T1 = {{ result.hitting_times.T1 }}
{%- if directory %}

written to {{ directory }}
{%- endif %}
"""

SWEEP_TEMPLATE = """adsim v{{ version }} -- sweep of {{ table | length }} cells
{{ "%-6s %-18s %-6s %-8s %-8s %-8s %-8s" | format("p_un", "method", "seed", "train", "test", "peak", "degrad.") }}
{%- for r in table.records %}
{%- if r.status == "ok" %}
{{ "%-6g %-18s %-6d %-8.3f %-8.3f %-8.3f %-8.3f" | format(r.p_un, r.method, r.seed, r.final_robust_train_acc, r.final_robust_test_acc, r.peak_robust_test_acc, r.degradation) }}
{%- else %}
{{ "%-6g %-18s %-6d" | format(r.p_un, r.method, r.seed) }} {{ r.status }}
{%- endif %}
{%- endfor %}
"""

IDENTIFY_TEMPLATE = """adsim v{{ version }} -- subset identification from {{ result.ensemble_size }} checkpoints
estimated |S_L| = {{ result.learnable | length }}
estimated |S_U| = {{ result.unlearnable | length }}
unclassified    = {{ result.unclassified | length }}
{%- if score %}
precision {{ score.precision }}, recall {{ score.recall }}, false positives {{ score.false_positives }}
{%- endif %}
histogram of robust-correct counts: {{ result.histogram | join(" ") }}
"""

ENTROPY_TEMPLATE = """adsim v{{ version }} -- unlearnable-entropy criterion
proxy |S_U| = {{ study.proxy | length }} (reference peak at {{ study.reference_peak }})
{{ "%-10s %-12s %-12s" | format("margin", "entropy", "robust test") }}
{%- for margin, entropy, accuracy in study.rows %}
{{ "%-10g" | format(margin) }} {{ "%-12s" | format("undefined" if entropy is none else "%.6f" | format(entropy)) }} {{ "failed" if accuracy is none else "%.3f" | format(accuracy) }}
{%- endfor %}
Spearman correlation: {{ "undefined" if study.correlation is none else "%+.3f" | format(study.correlation) }}
"""

VERIFY_TEMPLATE = """adsim v{{ version }} -- verify {{ directory }}
{%- for name, ok, detail in checks %}
  {{ "pass" if ok else "FAIL" }}  {{ name }}{% if detail %}: {{ detail }}{% endif %}
{%- endfor %}
"""
