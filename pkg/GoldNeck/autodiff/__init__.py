from GoldNeck.autodiff.gradcheck import fd_gradcheck, scalar_loss
from GoldNeck.autodiff.tape import (
    GradientSet,
    Node,
    Tape,
    TapeNode,
    TracedView,
    TracingOps,
    backward,
    forward_traced,
)
