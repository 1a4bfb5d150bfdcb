from GoldNeck.neck.config import ABLATION_TOGGLES, DEFAULT_ABLATION, MERGE_ABLATION, SCALES, NeckConfig
from GoldNeck.neck.gd_neck import MODULES, gd_neck_forward, neck_graph, pyramid_dims, random_pyramid
from GoldNeck.neck.pafpn import PAFPN_MODULES, pafpn_forward, pafpn_graph
from GoldNeck.neck.toy import (
    DetectorOutput,
    SquareDataset,
    make_square_dataset,
    toy_backbone,
    toy_detect_head,
    toy_detector,
    toy_loss_graph,
)
from GoldNeck.neck.trainer import TrainResult, step_zero_gradcheck, toy_train
