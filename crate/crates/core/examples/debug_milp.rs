use arbscore::domain::{BatteryConfig, RiskSpec, ScenarioEnsemble};
use arbscore::optimize::*;

fn main() {
    let ens = ScenarioEnsemble::new("d", vec![vec![30.0, 10.0, 20.0, 55.0, 40.0]]).unwrap();
    let config = BatteryConfig { kappa: 10.0, eta: 0.95, xi: 10.0, cycles: 1, n_buy: 1, n_sell: 1 };
    let dp = dp_optimize(&ens, &config, &RiskSpec::ExpectedProfit).unwrap();
    println!("dp objective {} schedule buy {:?} sell {:?}", dp.objective, dp.schedule.buy(), dp.schedule.sell());
    let milp = milp_optimize(&ens, &config, &RiskSpec::ExpectedProfit, &SolverOptions::default()).unwrap();
    println!("milp status {:?} gap {} objective {}", milp.status, milp.gap, milp.objective);
    println!("milp buy {:?}", milp.schedule.buy());
    println!("milp sell {:?}", milp.schedule.sell());

    // covariance twin identity
    let (sb, ss, rho, eta) = (12.0f64, 20.0f64, 0.4f64, 0.95f64);
    let id = arbscore::evaluate::covariance_twin(sb, ss, rho, eta, ss, rho);
    println!("identity root: {:?}", id);
}
