//! The eight scaled hydrological parameters of the catchment model.

/// One scaled input: a dimensionless multiplier on a physical spatial average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HydroParameter {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    pub description: &'static str,
    /// Spatial average the multiplier scales, in `unit`.
    pub average: f64,
    pub unit: &'static str,
}

pub const HYDRO_PARAMETERS: [HydroParameter; 8] = [
    HydroParameter {
        name: "x1",
        lower: 0.5,
        upper: 1.1,
        description: "percentage of the impervious area",
        average: 36.0,
        unit: "%",
    },
    HydroParameter {
        name: "x2",
        lower: 0.5,
        upper: 1.5,
        description: "characteristic width of the overland flow path",
        average: 35.7,
        unit: "m",
    },
    HydroParameter {
        name: "x3",
        lower: 0.5,
        upper: 1.5,
        description: "slope of the sub-catchments",
        average: 11.4,
        unit: "%",
    },
    HydroParameter {
        name: "x4",
        lower: 0.5,
        upper: 1.5,
        description: "depression storage height of the impervious area",
        average: 2.0,
        unit: "mm",
    },
    HydroParameter {
        name: "x5",
        lower: 0.5,
        upper: 1.5,
        description: "Manning roughness of the impervious area",
        average: 0.12,
        unit: "s m^-1/3",
    },
    HydroParameter {
        name: "x6",
        lower: 0.5,
        upper: 1.5,
        description: "depression storage height of the pervious area",
        average: 2.0,
        unit: "mm",
    },
    HydroParameter {
        name: "x7",
        lower: 0.5,
        upper: 1.5,
        description: "percentage of the impervious area without depression storage",
        average: 19.04,
        unit: "%",
    },
    HydroParameter {
        name: "x8",
        lower: 1.0,
        upper: 1.5,
        description: "Manning roughness of the channels",
        average: 0.012,
        unit: "s m^-1/3",
    },
];

pub fn hydro_bounds() -> Vec<(f64, f64)> {
    HYDRO_PARAMETERS.iter().map(|p| (p.lower, p.upper)).collect()
}

pub fn hydro_names() -> Vec<String> {
    HYDRO_PARAMETERS.iter().map(|p| p.name.to_string()).collect()
}
