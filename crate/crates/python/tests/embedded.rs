use lulc::lulc;
use pyo3::prelude::*;

#[test]
fn module_runs_in_embedded_interpreter() {
    pyo3::append_to_inittab!(lulc);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            cr#"
import lulc
r = lulc.Raster(2, 1, [("nir", [0.5, 0.0]), ("red", [0.1, 0.0]), ("qa", [0.0, 8.0])])
v, ok = lulc.index(r, "ndvi")
assert ok == [True, False] and abs(v[0] - 0.4 / 0.6) < 1e-12
assert lulc.mask_clouds(r, "qa").mask == [True, False]
m = lulc.metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
assert m["confusion"] == [[1, 1], [0, 2]] and m["accuracy"] == 0.75
try:
    lulc.index(r, "evi")
    raise AssertionError
except lulc.ConfigError:
    pass
assert issubclass(lulc.ConfigError, lulc.PipelineError)
"#,
            None,
            None,
        )
        .unwrap();
    });
}
