//! Named experiment presets, one per device scenario and protocol variant.

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub json: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig1-device",
        description: "explicit device composition against the blockwise form, N=2",
        json: r#"{"protocol":"identity-check","check":"device","N":2,"cases":20,"seed":11}"#,
    },
    Preset {
        name: "appendix-identity",
        description: "vacuum-projected tap splitter equals diag(T^n), 50 random cases",
        json: r#"{"protocol":"identity-check","check":"appendix","cases":50,"seed":12}"#,
    },
    Preset {
        name: "fig2-conversion",
        description: "forward conversion with phase-state detection, N=3 (probability 1/4)",
        json: r#"{"protocol":"convert","direction":"a2b","N":3,"mode":"conditional","psi":"phase"}"#,
    },
    Preset {
        name: "fig2-backward",
        description: "backward conversion conditioned on the channel-0 click, N=2",
        json: r#"{"protocol":"convert","direction":"b2a","N":2,"mode":"conditional","psi":"phase"}"#,
    },
    Preset {
        name: "fig2-nonuniform",
        description: "conversion with a non-uniform detection state, N=1 (probability 1/5)",
        json: r#"{"protocol":"convert","direction":"a2b","N":1,"mode":"conditional","psi":[[0.8944271909999159,0.0],[0.4472135954999579,0.0]]}"#,
    },
    Preset {
        name: "sec3-unconditional",
        description: "feed-forward conversion over the discrete phase outcomes, N=2",
        json: r#"{"protocol":"convert","direction":"a2b","N":2,"mode":"unconditional","psi":"phase"}"#,
    },
    Preset {
        name: "sec3-repeat",
        description: "repeat-until-success backward conversion, 10000 sampled runs, N=3",
        json: r#"{"protocol":"convert","direction":"b2a","N":3,"mode":"unconditional","psi":"phase","trials":10000,"seed":42}"#,
    },
    Preset {
        name: "fig3-unitary",
        description: "unitary engineering of a two-channel mixer, N=2",
        json: r#"{"protocol":"engineer","A":{"U":[[[0.7071067811865476,0.0],[0.7071067811865476,0.0],[0.0,0.0]],[[0.7071067811865476,0.0],[-0.7071067811865476,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0],[1.0,0.0]]],"Tk":[1.0,1.0,1.0],"UR":[[[1.0,0.0],[0.0,0.0],[0.0,0.0]],[[0.0,0.0],[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0],[1.0,0.0]]]},"mode":"conditional"}"#,
    },
    Preset {
        name: "fig3-projective",
        description: "projection onto the lowest Fock state, N=1",
        json: r#"{"protocol":"engineer","A":[[[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0]]],"mode":"conditional","input":[[0.6,0.0],[0.8,0.0]]}"#,
    },
    Preset {
        name: "fig3-nonunitary",
        description: "non-unitary target operator via its polar factors, N=1",
        json: r#"{"protocol":"engineer","A":[[[0.9,0.1],[0.2,-0.3]],[[0.1,0.0],[0.4,0.2]]],"mode":"conditional","input":[[0.6,0.0],[0.0,0.8]]}"#,
    },
    Preset {
        name: "sec4-unconditional",
        description: "unconditional unitary engineering: every trial succeeds, N=2",
        json: r#"{"protocol":"engineer","A":{"U":[[[0.0,0.0],[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0],[1.0,0.0]],[[1.0,0.0],[0.0,0.0],[0.0,0.0]]],"Tk":[1.0,1.0,1.0],"UR":[[[1.0,0.0],[0.0,0.0],[0.0,0.0]],[[0.0,0.0],[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0],[1.0,0.0]]]},"mode":"unconditional"}"#,
    },
    Preset {
        name: "sec5-overlap",
        description: "overlap probe of a mixed state in a rotated channel basis, N=1",
        json: r#"{"protocol":"measure","what":"overlap","rho":[[[0.7,0.0],[0.2,0.1]],[[0.2,-0.1],[0.3,0.0]]],"U":[[[0.7071067811865476,0.0],[0.7071067811865476,0.0]],[[0.7071067811865476,0.0],[-0.7071067811865476,0.0]]],"channel":0}"#,
    },
    Preset {
        name: "sec5-expectation",
        description: "expectation value of a ladder operator from two-basis clicks, N=1",
        json: r#"{"protocol":"measure","what":"expectation","rho":[[[0.7,0.0],[0.2,0.1]],[[0.2,-0.1],[0.3,0.0]]],"Z":[[[0.0,0.0],[0.0,0.0]],[[1.0,0.0],[0.0,0.0]]]}"#,
    },
    Preset {
        name: "sec5-reconstruct",
        description: "experimental diagonalization of an unknown state, N=2",
        json: r#"{"protocol":"reconstruct","rho":[[[0.5,0.0],[0.1,0.1],[0.0,0.05]],[[0.1,-0.1],[0.3,0.0],[0.02,0.0]],[[0.0,-0.05],[0.02,0.0],[0.2,0.0]]],"mode":"analytic","direction":"max","seed":7,"fock_matrix":true}"#,
    },
    Preset {
        name: "sec5-purify",
        description: "projective purification reading out the top eigenvalue, N=1",
        json: r#"{"protocol":"measure","what":"purify","rho":[[[0.9,0.0],[0.0,0.0]],[[0.0,0.0],[0.1,0.0]]],"seed":3}"#,
    },
    Preset {
        name: "fig4-teleport",
        description: "bare teleportation: Bob's state copies Alice's, N=2",
        json: r#"{"protocol":"telemanip","A":{"U":[[[1.0,0.0],[0.0,0.0],[0.0,0.0]],[[0.0,0.0],[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0],[1.0,0.0]]],"Tk":[1.0,1.0,1.0],"UR":[[[1.0,0.0],[0.0,0.0],[0.0,0.0]],[[0.0,0.0],[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0],[1.0,0.0]]]},"mode":"conditional","input":[[0.6,0.0],[0.0,0.48],[0.64,0.0]]}"#,
    },
    Preset {
        name: "fig4-telemanip",
        description: "teleportation combined with a non-unitary transformation, N=1",
        json: r#"{"protocol":"telemanip","A":[[[0.9,0.1],[0.2,-0.3]],[[0.1,0.0],[0.4,0.2]]],"mode":"conditional","input":[[0.6,0.0],[0.0,0.8]]}"#,
    },
    Preset {
        name: "sec6-whitenoise",
        description: "reduced-state analysis: Bob sees white noise without the message, N=2",
        json: r#"{"protocol":"telemanip","A":{"U":[[[0.7071067811865476,0.0],[0.7071067811865476,0.0],[0.0,0.0]],[[0.7071067811865476,0.0],[-0.7071067811865476,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0],[1.0,0.0]]],"Tk":[1.0,0.6,0.3],"UR":[[[1.0,0.0],[0.0,0.0],[0.0,0.0]],[[0.0,0.0],[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0],[1.0,0.0]]]},"mode":"reduced","input":[[0.6,0.0],[0.0,0.48],[0.64,0.0]]}"#,
    },
    Preset {
        name: "sec6-unconditional",
        description: "unconditional telemanipulation with channel-and-phase corrections, N=1",
        json: r#"{"protocol":"telemanip","A":{"U":[[[0.7071067811865476,0.0],[0.7071067811865476,0.0]],[[0.7071067811865476,0.0],[-0.7071067811865476,0.0]]],"Tk":[1.0,1.0],"UR":[[[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[1.0,0.0]]]},"mode":"unconditional","input":[[0.6,0.0],[0.0,0.8]]}"#,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
