use wasm_bindgen::prelude::*;

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = eeCurve)]
pub fn ee_curve(
    variable: &str,
    values: &[f64],
    num_users: usize,
    num_antennas: usize,
    trials: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(crate::ee_curve(variable, values, num_users, num_antennas, trials, seed.into()))
}

#[wasm_bindgen(js_name = admittedVsBudget)]
pub fn admitted_vs_budget(
    budgets_w: &[f64],
    num_users: usize,
    min_rate: f64,
    trials: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(crate::admitted_vs_budget(budgets_w, num_users, min_rate, trials, seed.into()))
}

#[wasm_bindgen(js_name = channelHardening)]
pub fn channel_hardening(antennas: &[u32], draws: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    let antennas: Vec<usize> = antennas.iter().map(|&m| m as usize).collect();
    js(crate::channel_hardening(&antennas, draws, seed.into()))
}
