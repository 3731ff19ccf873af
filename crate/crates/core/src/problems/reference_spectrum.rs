//! Eigenvalues of the standard 100-dimensional Quadratic Deep benchmark
//! instance: 90 uniform draws on (0, 1) followed by 10 on (30, 60), as
//! produced by the reference generator seeded with 42.

pub(crate) const REFERENCE_EIGENVALUES: [f64; 100] = [
    0.3745401188473625,
    0.9507143064099162,
    0.7319939418114051,
    0.5986584841970366,
    0.15601864044243652,
    0.15599452033620265,
    0.05808361216819946,
    0.8661761457749352,
    0.6011150117432088,
    0.7080725777960455,
    0.020584494295802447,
    0.9699098521619943,
    0.8324426408004217,
    0.21233911067827616,
    0.18182496720710062,
    0.18340450985343382,
    0.3042422429595377,
    0.5247564316322378,
    0.43194501864211576,
    0.2912291401980419,
    0.6118528947223795,
    0.13949386065204183,
    0.29214464853521815,
    0.3663618432936917,
    0.45606998421703593,
    0.7851759613930136,
    0.19967378215835974,
    0.5142344384136116,
    0.5924145688620425,
    0.046450412719997725,
    0.6075448519014384,
    0.17052412368729153,
    0.06505159298527952,
    0.9488855372533332,
    0.9656320330745594,
    0.8083973481164611,
    0.3046137691733707,
    0.09767211400638387,
    0.6842330265121569,
    0.4401524937396013,
    0.12203823484477883,
    0.4951769101112702,
    0.034388521115218396,
    0.9093204020787821,
    0.2587799816000169,
    0.662522284353982,
    0.31171107608941095,
    0.5200680211778108,
    0.5467102793432796,
    0.18485445552552704,
    0.9695846277645586,
    0.7751328233611146,
    0.9394989415641891,
    0.8948273504276488,
    0.5978999788110851,
    0.9218742350231168,
    0.0884925020519195,
    0.1959828624191452,
    0.045227288910538066,
    0.32533033076326434,
    0.388677289689482,
    0.2713490317738959,
    0.8287375091519293,
    0.3567533266935893,
    0.28093450968738076,
    0.5426960831582485,
    0.14092422497476265,
    0.8021969807540397,
    0.07455064367977082,
    0.9868869366005173,
    0.7722447692966574,
    0.1987156815341724,
    0.005522117123602399,
    0.8154614284548342,
    0.7068573438476171,
    0.7290071680409873,
    0.7712703466859457,
    0.07404465173409036,
    0.3584657285442726,
    0.11586905952512971,
    0.8631034258755935,
    0.6232981268275579,
    0.3308980248526492,
    0.06355835028602363,
    0.3109823217156622,
    0.32518332202674705,
    0.7296061783380641,
    0.6375574713552131,
    0.8872127425763265,
    0.4722149251619493,
    33.58782737814905,
    51.39734361668985,
    52.82355145850693,
    46.83831592708489,
    53.12901539863683,
    44.81386789093172,
    45.681984881459826,
    42.82623055075649,
    30.762573802322855,
    33.23674280979913,
];
