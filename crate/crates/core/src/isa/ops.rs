use serde::{Deserialize, Serialize};

/// Encoding format of an operation.
///
/// `Shift6`/`Shift5` are I-type encodings whose immediate is an unsigned
/// shift amount; `Fence` and `System` carry no register operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Format {
    R,
    I,
    Shift6,
    Shift5,
    S,
    B,
    U,
    J,
    Fence,
    System,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpClass {
    Alu,
    Load,
    Store,
    Branch,
    Jump,
    System,
}

/// Declared immediate field of an operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ImmKind {
    None,
    Signed(u8),
    Unsigned(u8),
}

impl ImmKind {
    pub fn contains(self, value: i64) -> bool {
        match self {
            ImmKind::None => false,
            ImmKind::Signed(bits) => super::fits_signed(value, bits),
            ImmKind::Unsigned(bits) => value >= 0 && (value as u64) < (1u64 << bits),
        }
    }
}

/// Catalog entry for one operation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpInfo {
    pub mnemonic: &'static str,
    pub format: Format,
    pub class: OpClass,
    pub commutative: bool,
    /// Software latency in cycles.
    pub sw_cycles: u32,
    /// Normalized hardware delay (32-bit add = 1.0). Non-physical placeholder.
    pub hw_delay_units: f64,
    /// Abstract area units. Non-physical placeholder.
    pub area_units: f64,
    pub default_forbidden: bool,
}

macro_rules! catalog {
    ($( $variant:ident => $mn:literal, $fmt:ident, $class:ident, $comm:literal, $delay:literal, $area:literal, $forbid:literal; )*) => {
        /// Every RV64IM operation known to the decoder.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum Opcode {
            $( $variant, )*
        }

        const INFO: &[OpInfo] = &[
            $( OpInfo {
                mnemonic: $mn,
                format: Format::$fmt,
                class: OpClass::$class,
                commutative: $comm,
                sw_cycles: 1,
                hw_delay_units: $delay,
                area_units: $area,
                default_forbidden: $forbid,
            }, )*
        ];

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[ $( Opcode::$variant, )* ];
        }
    };
}

catalog! {
    Lui    => "lui",    U,      Alu,    false, 0.1,  0.05, false;
    Auipc  => "auipc",  U,      Alu,    false, 1.0,  1.0,  true;
    Jal    => "jal",    J,      Jump,   false, 0.0,  0.0,  true;
    Jalr   => "jalr",   I,      Jump,   false, 0.0,  0.0,  true;
    Beq    => "beq",    B,      Branch, false, 0.0,  0.0,  true;
    Bne    => "bne",    B,      Branch, false, 0.0,  0.0,  true;
    Blt    => "blt",    B,      Branch, false, 0.0,  0.0,  true;
    Bge    => "bge",    B,      Branch, false, 0.0,  0.0,  true;
    Bltu   => "bltu",   B,      Branch, false, 0.0,  0.0,  true;
    Bgeu   => "bgeu",   B,      Branch, false, 0.0,  0.0,  true;
    Lb     => "lb",     I,      Load,   false, 0.0,  0.0,  true;
    Lh     => "lh",     I,      Load,   false, 0.0,  0.0,  true;
    Lw     => "lw",     I,      Load,   false, 0.0,  0.0,  true;
    Ld     => "ld",     I,      Load,   false, 0.0,  0.0,  true;
    Lbu    => "lbu",    I,      Load,   false, 0.0,  0.0,  true;
    Lhu    => "lhu",    I,      Load,   false, 0.0,  0.0,  true;
    Lwu    => "lwu",    I,      Load,   false, 0.0,  0.0,  true;
    Sb     => "sb",     S,      Store,  false, 0.0,  0.0,  true;
    Sh     => "sh",     S,      Store,  false, 0.0,  0.0,  true;
    Sw     => "sw",     S,      Store,  false, 0.0,  0.0,  true;
    Sd     => "sd",     S,      Store,  false, 0.0,  0.0,  true;
    Addi   => "addi",   I,      Alu,    false, 1.0,  1.0,  false;
    Slti   => "slti",   I,      Alu,    false, 1.1,  1.0,  false;
    Sltiu  => "sltiu",  I,      Alu,    false, 1.1,  1.0,  false;
    Xori   => "xori",   I,      Alu,    false, 0.35, 0.3,  false;
    Ori    => "ori",    I,      Alu,    false, 0.35, 0.3,  false;
    Andi   => "andi",   I,      Alu,    false, 0.35, 0.3,  false;
    Slli   => "slli",   Shift6, Alu,    false, 0.9,  0.8,  false;
    Srli   => "srli",   Shift6, Alu,    false, 0.9,  0.8,  false;
    Srai   => "srai",   Shift6, Alu,    false, 0.9,  0.8,  false;
    Add    => "add",    R,      Alu,    true,  1.0,  1.0,  false;
    Sub    => "sub",    R,      Alu,    false, 1.0,  1.0,  false;
    Sll    => "sll",    R,      Alu,    false, 0.9,  0.8,  false;
    Slt    => "slt",    R,      Alu,    false, 1.1,  1.0,  false;
    Sltu   => "sltu",   R,      Alu,    false, 1.1,  1.0,  false;
    Xor    => "xor",    R,      Alu,    true,  0.35, 0.3,  false;
    Srl    => "srl",    R,      Alu,    false, 0.9,  0.8,  false;
    Sra    => "sra",    R,      Alu,    false, 0.9,  0.8,  false;
    Or     => "or",     R,      Alu,    true,  0.35, 0.3,  false;
    And    => "and",    R,      Alu,    true,  0.35, 0.3,  false;
    Fence  => "fence",  Fence,  System, false, 0.0,  0.0,  true;
    Ecall  => "ecall",  System, System, false, 0.0,  0.0,  true;
    Ebreak => "ebreak", System, System, false, 0.0,  0.0,  true;
    Addiw  => "addiw",  I,      Alu,    false, 1.0,  1.0,  false;
    Slliw  => "slliw",  Shift5, Alu,    false, 0.9,  0.8,  false;
    Srliw  => "srliw",  Shift5, Alu,    false, 0.9,  0.8,  false;
    Sraiw  => "sraiw",  Shift5, Alu,    false, 0.9,  0.8,  false;
    Addw   => "addw",   R,      Alu,    true,  1.0,  1.0,  false;
    Subw   => "subw",   R,      Alu,    false, 1.0,  1.0,  false;
    Sllw   => "sllw",   R,      Alu,    false, 0.9,  0.8,  false;
    Srlw   => "srlw",   R,      Alu,    false, 0.9,  0.8,  false;
    Sraw   => "sraw",   R,      Alu,    false, 0.9,  0.8,  false;
    Mul    => "mul",    R,      Alu,    true,  3.5,  8.0,  false;
    Mulh   => "mulh",   R,      Alu,    true,  3.5,  8.0,  false;
    Mulhsu => "mulhsu", R,      Alu,    false, 3.5,  8.0,  false;
    Mulhu  => "mulhu",  R,      Alu,    true,  3.5,  8.0,  false;
    Div    => "div",    R,      Alu,    false, 12.0, 20.0, false;
    Divu   => "divu",   R,      Alu,    false, 12.0, 20.0, false;
    Rem    => "rem",    R,      Alu,    false, 12.0, 20.0, false;
    Remu   => "remu",   R,      Alu,    false, 12.0, 20.0, false;
    Mulw   => "mulw",   R,      Alu,    true,  3.5,  8.0,  false;
    Divw   => "divw",   R,      Alu,    false, 12.0, 20.0, false;
    Divuw  => "divuw",  R,      Alu,    false, 12.0, 20.0, false;
    Remw   => "remw",   R,      Alu,    false, 12.0, 20.0, false;
    Remuw  => "remuw",  R,      Alu,    false, 12.0, 20.0, false;
}

impl Opcode {
    pub fn info(self) -> &'static OpInfo {
        &INFO[self as usize]
    }

    pub fn mnemonic(self) -> &'static str {
        self.info().mnemonic
    }

    pub fn format(self) -> Format {
        self.info().format
    }

    pub fn class(self) -> OpClass {
        self.info().class
    }

    pub fn is_commutative(self) -> bool {
        self.info().commutative
    }

    pub fn from_mnemonic(name: &str) -> Option<Opcode> {
        Opcode::ALL.iter().copied().find(|op| op.mnemonic() == name)
    }

    pub fn imm_kind(self) -> ImmKind {
        match self.format() {
            Format::R | Format::System => ImmKind::None,
            Format::I | Format::S => ImmKind::Signed(12),
            Format::Shift6 => ImmKind::Unsigned(6),
            Format::Shift5 => ImmKind::Unsigned(5),
            Format::B => ImmKind::Signed(13),
            Format::U => ImmKind::Signed(20),
            Format::J => ImmKind::Signed(21),
            Format::Fence => ImmKind::Unsigned(12),
        }
    }

    /// Whether the operation writes `rd`.
    pub fn has_rd(self) -> bool {
        matches!(
            self.format(),
            Format::R | Format::I | Format::Shift6 | Format::Shift5 | Format::U | Format::J
        )
    }

    pub fn has_rs1(self) -> bool {
        matches!(
            self.format(),
            Format::R | Format::I | Format::Shift6 | Format::Shift5 | Format::S | Format::B
        )
    }

    pub fn has_rs2(self) -> bool {
        matches!(self.format(), Format::R | Format::S | Format::B)
    }

    /// Operations that only make sense on a pc-relative or memory datapath.
    pub fn is_memory(self) -> bool {
        matches!(self.class(), OpClass::Load | OpClass::Store) || self == Opcode::Fence
    }
}

impl std::fmt::Display for Opcode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.mnemonic())
    }
}
