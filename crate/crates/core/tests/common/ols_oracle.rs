//! A 40-row hand panel (5 municipalities × 8 years) and the OLS / CR1 values
//! an independent dense-matrix implementation (numpy: `inv(X'X) X'y`, sandwich
//! with `G/(G-1) · (N-1)/(N-K)`) produces for it. Rows follow closed-form
//! formulas so the oracle script can rebuild them exactly.

#![allow(dead_code)]

use envymarket_core::econometrics::PanelRecord;

pub fn hand_panel() -> Vec<PanelRecord> {
    (0..40u32)
        .map(|k| {
            let m = k % 5;
            let year = 2008 + (k / 5) as i32;
            let treated = m >= 3;
            let post = year >= 2012;
            let moved = (k * 11 + 3) % 7 < 2 || (treated && post && k % 3 == 0);
            PanelRecord {
                student_id: k + 1,
                year,
                municipality: m,
                moved: moved as u8,
                moved_placebo: None,
                treated: treated as u8,
                post: post as u8,
                female: Some(((k * 7) % 3 == 0) as u8),
                parental_income: Some(200.0 + 37.0 * ((k * 13) % 11) as f64),
                parental_education_years: Some(9.0 + ((k * 5) % 7) as f64),
                gpa: if k == 5 || k == 22 { None } else { Some(-1.5 + 0.1 * ((k * 17) % 31) as f64) },
                demand_index: None,
                supply_index: None,
                subgroup: None,
            }
        })
        .collect()
}

/// `(name, coefficient, CR1 standard error)` with year and municipality fixed effects.
pub const WITH_FE: &[(&str, f64, f64)] = &[
    ("intercept", -0.01591630115791509, 1.0638378953614163),
    ("treated_x_post", 0.506819595937961, 0.5040776959268529),
    ("female", 0.12195573371598746, 0.1327419284516699),
    ("parental_income", 0.00021261131391838394, 0.0014490984134437296),
    ("parental_education_years", 0.020382125098838612, 0.04745617190208897),
    ("gpa", -0.020789920863192354, 0.06377979917205866),
    ("missing_gpa", 0.4084655649622811, 0.7070022944838746),
    ("year_2009", -0.2684988904243618, 0.32412255932387846),
    ("year_2010", -0.16362394751583162, 0.5253655130843744),
    ("year_2011", -0.012766021535807848, 0.617479862955419),
    ("year_2012", -0.2551989493518417, 0.40963977807666235),
    ("year_2013", -0.37911780742682477, 0.38228264865554396),
    ("year_2014", -0.2081978472258285, 0.2738339685008089),
    ("year_2015", -0.00441379936423153, 0.1956822232224393),
    ("municipality_1", 0.16645646033266426, 0.08447115017324476),
    ("municipality_2", 0.023039333875962784, 0.08337868206786335),
    ("municipality_3", 0.06627462909453204, 0.2533659984257881),
    ("municipality_4", -0.07326234759712603, 0.28606804856932677),
];

/// Same data without fixed effects (treated and post main effects enter).
pub const WITHOUT_FE: &[(&str, f64, f64)] = &[
    ("intercept", -0.18323707176107928, 0.6079741291190153),
    ("treated_x_post", 0.5108450652666464, 0.36034291166159843),
    ("treated", -0.07187617768355326, 0.2299988124652834),
    ("post", -0.09630216412975798, 0.20938867701473027),
    ("female", 0.14127739623431124, 0.12546719338532475),
    ("parental_income", 0.00028949639301007927, 0.0011170037333469794),
    ("parental_education_years", 0.02781937358063622, 0.023621615202174522),
    ("gpa", -0.05961544522115873, 0.025802141614562176),
    ("missing_gpa", 0.24217414067034176, 0.5698221474799162),
];
