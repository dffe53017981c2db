from .autograd import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .ops import activation, concat, conv2d, dice_loss, relu, sigmoid, upsample2x
from .optim import AdamState, adam_step, lr_inverse_time
